// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Differentiable tensor operations. Each op computes its value eagerly and,
// when a tape is open and an input needs a gradient, records its backward
// rule. Shape problems throw ShapeError naming the offending shapes; bad axes
// or hyperparameters throw ValueError.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "eciwb/tensor.hpp"

namespace eciwb::ops {

// a [..., m, k] x b [k, n] or b [..., k, n] (same leading dims) -> [..., m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x [..., in] times w [out, in] transposed -> [..., out]
Tensor linear(const Tensor& x, const Tensor& w);

// Elementwise add/mul. `b` may equal a's shape or any trailing suffix of it
// (broadcast over the leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double alpha);

Tensor reshape(const Tensor& x, Shape shape);
// Collapses axes [start_axis, rank) into one.
Tensor flatten(const Tensor& x, std::size_t start_axis);
// Swaps two axes, materializing the result.
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);

// Gathers rows of table [V, d]; ids_shape gives the leading shape of the output.
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, const Shape& ids_shape);

Tensor silu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);

enum class Reduction { kMean, kSum };

// Cross-entropy of logits [..., C] against one target per row. Rows whose
// target equals ignore_index contribute nothing. Mean reduction divides by the
// number of counted rows.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     std::optional<std::int64_t> ignore_index = std::nullopt,
                     Reduction reduction = Reduction::kMean);

// Output length along `axis` is floor((len - kernel) / stride) + 1.
std::size_t pooled_length(std::size_t len, std::size_t kernel, std::size_t stride);
// Max over each window; ties route the gradient to the first maximal index.
Tensor max_pool_1d(const Tensor& x, std::size_t axis, std::size_t kernel, std::size_t stride);
Tensor avg_pool_1d(const Tensor& x, std::size_t axis, std::size_t kernel, std::size_t stride);

// x / sqrt(mean(x^2) + eps) * weight over the trailing axis.
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps);

// scores [..., s, s]: entries above the diagonal become -inf.
Tensor causal_mask(const Tensor& scores);

// x [b, s, ...]: zeroes every position p of row r where keep[r * s + p] is 0.
Tensor mask_positions(const Tensor& x, std::span<const std::uint8_t> keep);

}  // namespace eciwb::ops
