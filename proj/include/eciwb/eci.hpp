// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Classification head over the whole last-layer embedding [b, s, d]:
// max-pool along one axis, average-pool along the other, flatten, a stack of
// affine+SiLU layers, and a final affine layer to C class logits. It always
// yields exactly one label per input row.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eciwb/tensor.hpp"

namespace eciwb {

enum class PoolAxis { kSequence, kEmbedding };

struct EciConfig {
  std::size_t max_kernel = 5;  // N
  std::size_t avg_kernel = 8;  // K
  PoolAxis max_axis = PoolAxis::kSequence;
  PoolAxis avg_axis = PoolAxis::kEmbedding;
  std::vector<std::size_t> hidden_widths{256, 64};
  std::vector<std::string> class_names;
  std::size_t seq_len = 128;
  std::size_t d_model = 64;
  // Zero the hidden state of masked positions (padding) before pooling.
  bool mask_padding = false;

  std::size_t num_classes() const { return class_names.size(); }
  void validate() const;
};

struct EciLayerCount {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t params = 0;  // in * out + out
};

struct EciParamCount {
  std::size_t pooled_seq = 0;
  std::size_t pooled_emb = 0;
  std::size_t flatten_width = 0;
  std::vector<EciLayerCount> layers;
  std::size_t total = 0;
};

// Exact head size for the given dims, using stride = kernel pooling with
// max pooling on the sequence axis and average pooling on the embedding axis.
// Pure arithmetic; nothing is allocated.
EciParamCount eci_param_count(std::size_t seq_len, std::size_t d_model, std::size_t max_kernel,
                              std::size_t avg_kernel, std::span<const std::size_t> hidden_widths,
                              std::size_t num_classes);
EciParamCount eci_param_count(const EciConfig& config);

struct EciHead {
  EciConfig config;
  std::vector<Tensor> weights;  // [out, in]
  std::vector<Tensor> biases;  // [out]

  // "eci.mlp.{i}.w" / "eci.mlp.{i}.b"
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;
};

// Weights ~ N(0, 1/in), biases zero.
EciHead init_eci_head(const EciConfig& config, std::uint64_t seed);

struct EciOutput {
  Tensor logits;  // [b, C]
  std::vector<std::size_t> predicted;
  std::vector<std::string> labels;
};

// keep: optional [b * s] position mask, used when config.mask_padding is set.
EciOutput eci_forward(const EciHead& head, const Tensor& last_hidden, std::span<const std::uint8_t> keep = {});

// Row-wise argmax, lowest index on ties. Total: one index per row.
std::vector<std::size_t> predict_indices(const Tensor& logits);
std::vector<std::string> predict_label(const Tensor& logits, std::span<const std::string> class_names);

}  // namespace eciwb
