// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "eciwb/tensor.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

struct EciHead;
struct QuantizedModel;

// Projection names accepted as adapter targets: q_proj, k_proj, v_proj, o_proj.
Projection parse_projection(const std::string& name);
std::string projection_name(Projection p);

struct LoraConfig {
  std::vector<std::string> targets{"q_proj", "v_proj"};
  std::size_t rank = 16;
  double alpha = 16.0;
};

struct AdapterKey {
  std::size_t layer = 0;
  Projection target = Projection::kQuery;
  auto operator<=>(const AdapterKey&) const = default;
};

// Low-rank update of one frozen projection: W0 + scale * B A, with
// A [r, in] and B [out, r].
struct LoraAdapter {
  AdapterKey key;
  Tensor a;
  Tensor b;
  std::size_t rank = 16;
  double alpha = 16.0;

  double scale() const { return alpha / static_cast<double>(rank); }
  // Checkpoint names "lora.{layer}.{target}.A" / ".B".
  std::string name_prefix() const;
};

struct LoraModel {
  Model base;
  std::map<AdapterKey, LoraAdapter> adapters;
  // When set, the frozen base weights are kept in NF4 and dequantized for each
  // forward pass; `base` then only supplies the config and the full-precision
  // tensors that were not quantized.
  std::shared_ptr<const QuantizedModel> quantized;

  LoraConfig config;

  ProjectionHook hook() const;
  // The weights forward() actually uses (dequantized when quantized).
  Model effective_base() const;
  std::vector<NamedTensor> adapter_parameters() const;
};

// Wraps each target projection of every layer. A ~ N(0, 1/r), B = 0, so the
// adapted model starts out identical to the base. All base weights are frozen.
LoraModel inject_lora(Model base, std::span<const std::string> targets, std::size_t rank, double alpha,
                      std::uint64_t seed);
LoraModel inject_lora(Model base, const LoraConfig& config, std::uint64_t seed);

// h = x W0^T + scale * (x A^T) B^T
Tensor lora_forward(const Tensor& w0, const Tensor& a, const Tensor& b, double scale, const Tensor& x);

ForwardOutput forward(const LoraModel& model, const TokenBatch& tokens);

// Folds every adapter into its base matrix (W0 + scale * B A) and returns a
// plain model. The adapters are removed from `model`; merging a model without
// adapters throws ValueError.
Model merge_adapters(LoraModel& model);

struct ParameterGroup {
  std::string name;
  std::size_t count = 0;
  bool trainable = false;
};

struct ParameterReport {
  std::size_t trainable_count = 0;
  std::size_t frozen_count = 0;
  std::size_t total() const { return trainable_count + frozen_count; }
  std::vector<ParameterGroup> groups;
};

// Exact tally of the trainable set (adapters plus ECI head) versus frozen
// base weights, grouped by "base", "lora.q_proj", "lora.v_proj", "eci".
ParameterReport trainable_parameter_report(const LoraModel& model, const EciHead* eci);
ParameterReport trainable_parameter_report(const Model& model);

}  // namespace eciwb
