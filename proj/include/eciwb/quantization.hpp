// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Blockwise 4-bit NormalFloat (NF4) storage for frozen weights.
//
// Each block is scaled by its absolute maximum and every element is snapped
// to the nearest of 16 codebook values built from standard-normal quantiles.
// Codes are packed two per byte, low nibble first. Weights are dequantized on
// use; there is no 4-bit arithmetic.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eciwb/tensor.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

using Nf4Codebook = std::array<double, 16>;

// Eight positive normal quantiles on the grid linspace(offset, 0.5, 9) and
// seven negative ones on linspace(offset, 0.5, 8), plus an exact zero, each
// side normalized so the extremes are -1 and 1. offset = 0.9677083, the
// midpoint of 1 - 1/30 and 1 - 1/32.
const Nf4Codebook& nf4_codebook();
// Largest gap between adjacent codebook entries.
double nf4_max_gap();

// Index of the codebook entry nearest to v (v in [-1, 1]); exact midpoints
// resolve to the lower code.
std::uint8_t nf4_nearest_code(double v);

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, std::size_t count);

struct QuantizedBlock {
  std::vector<std::uint8_t> packed;  // ceil(count / 2) bytes
  std::size_t count = 0;
  double absmax = 0.0;
};

// Throws ValueError on non-finite input or block_size == 0.
std::vector<QuantizedBlock> nf4_quantize(std::span<const double> weights, std::size_t block_size);
// Throws ValueError on malformed blocks.
std::vector<double> nf4_dequantize(std::span<const QuantizedBlock> blocks);

// Second-level quantization of the per-block absmax values: mean-centred,
// then symmetric 8-bit codes with one float64 scale per group of 256.
struct DoubleQuantized {
  double mean = 0.0;
  std::size_t group_size = 256;
  std::vector<std::int8_t> codes;
  std::vector<double> scales;
};

DoubleQuantized double_quantize(std::span<const double> absmax, std::size_t group_size = 256);
std::vector<double> double_dequantize(const DoubleQuantized& dq);

struct QuantizedTensor {
  Shape shape;
  std::size_t block_size = 64;
  std::vector<QuantizedBlock> blocks;
  // When set, the blocks' absmax values are stored through this instead.
  std::optional<DoubleQuantized> absmax_dq;

  std::size_t numel() const { return shape_numel(shape); }
  // Bytes of packed codes plus scale storage.
  std::size_t storage_bytes() const;
};

QuantizedTensor quantize_tensor(const Tensor& t, std::size_t block_size, bool double_quant = false);
Tensor dequantize_tensor(const QuantizedTensor& q);

struct MemoryReport {
  std::size_t float64_bytes = 0;  // of the quantized tensors at full precision
  std::size_t packed_bytes = 0;
  std::size_t quantized_tensors = 0;
  double ratio() const { return float64_bytes ? static_cast<double>(packed_bytes) / float64_bytes : 0.0; }
};

// A model whose frozen matrices (every 2-D parameter) live in NF4; 1-D norm
// weights stay in float64.
struct QuantizedModel {
  ModelConfig config;
  std::size_t block_size = 64;
  std::map<std::string, QuantizedTensor> quantized;
  std::map<std::string, Tensor> full_precision;
  MemoryReport memory;

  // Dequantizes everything into a frozen float64 model.
  Model materialize() const;
};

QuantizedModel quantize_model(const Model& model, std::size_t block_size, bool double_quant = false);

}  // namespace eciwb
