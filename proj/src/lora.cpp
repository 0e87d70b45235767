// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/lora.hpp"

#include <cmath>

#include "eciwb/eci.hpp"
#include "eciwb/error.hpp"
#include "eciwb/kernels.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/quantization.hpp"
#include "eciwb/rng.hpp"

namespace eciwb {

Projection parse_projection(const std::string& name) {
  if (name == "q_proj") return Projection::kQuery;
  if (name == "k_proj") return Projection::kKey;
  if (name == "v_proj") return Projection::kValue;
  if (name == "o_proj") return Projection::kOutput;
  throw ValueError("unknown LoRA target '" + name + "' (expected q_proj, k_proj, v_proj or o_proj)");
}

std::string projection_name(Projection p) {
  switch (p) {
    case Projection::kQuery: return "q_proj";
    case Projection::kKey: return "k_proj";
    case Projection::kValue: return "v_proj";
    case Projection::kOutput: return "o_proj";
  }
  return "?";
}

std::string LoraAdapter::name_prefix() const {
  return "lora." + std::to_string(key.layer) + "." + projection_name(key.target);
}

namespace {

const Tensor& base_weight(const Model& m, const AdapterKey& key) {
  const DecoderLayer& l = m.layers.at(key.layer);
  switch (key.target) {
    case Projection::kQuery: return l.wq;
    case Projection::kKey: return l.wk;
    case Projection::kValue: return l.wv;
    case Projection::kOutput: return l.wo;
  }
  return l.wq;
}

Tensor& base_weight(Model& m, const AdapterKey& key) {
  return const_cast<Tensor&>(base_weight(static_cast<const Model&>(m), key));
}

}  // namespace

Tensor lora_forward(const Tensor& w0, const Tensor& a, const Tensor& b, double scale, const Tensor& x) {
  if (a.rank() != 2 || b.rank() != 2 || w0.rank() != 2 || a.dim(1) != w0.dim(1) || b.dim(0) != w0.dim(0) ||
      b.dim(1) != a.dim(0))
    throw ShapeError("lora_forward: inconsistent shapes W0 " + shape_str(w0.shape()) + ", A " +
                     shape_str(a.shape()) + ", B " + shape_str(b.shape()));
  const Tensor base = ops::linear(x, w0);
  const Tensor update = ops::linear(ops::linear(x, a), b);
  return ops::add(base, scale == 1.0 ? update : ops::scale(update, scale));
}

LoraModel inject_lora(Model base, std::span<const std::string> targets, std::size_t rank, double alpha,
                      std::uint64_t seed) {
  if (rank == 0) throw ValueError("LoRA rank must be >= 1");
  if (!(alpha > 0.0)) throw ValueError("LoRA alpha must be positive");
  std::vector<Projection> projections;
  for (const auto& t : targets) projections.push_back(parse_projection(t));

  base.set_requires_grad(false);
  LoraModel out;
  Rng rng(seed);
  const double a_std = 1.0 / std::sqrt(static_cast<double>(rank));
  for (std::size_t layer = 0; layer < base.layers.size(); ++layer) {
    for (Projection p : projections) {
      AdapterKey key{layer, p};
      const Tensor& w0 = base_weight(base, key);
      const std::size_t out_dim = w0.dim(0);
      const std::size_t in_dim = w0.dim(1);
      if (rank >= std::min(in_dim, out_dim))
        throw ValueError("LoRA rank " + std::to_string(rank) + " must be below min(" + std::to_string(in_dim) +
                         ", " + std::to_string(out_dim) + ")");
      LoraAdapter adapter;
      adapter.key = key;
      adapter.rank = rank;
      adapter.alpha = alpha;
      adapter.a = rng.normal_tensor({rank, in_dim}, a_std);
      adapter.b = Tensor::zeros({out_dim, rank});
      adapter.a.set_requires_grad(true);
      adapter.b.set_requires_grad(true);
      out.adapters.emplace(key, std::move(adapter));
    }
  }
  out.base = std::move(base);
  out.config.targets.assign(targets.begin(), targets.end());
  out.config.rank = rank;
  out.config.alpha = alpha;
  return out;
}

LoraModel inject_lora(Model base, const LoraConfig& config, std::uint64_t seed) {
  return inject_lora(std::move(base), config.targets, config.rank, config.alpha, seed);
}

ProjectionHook LoraModel::hook() const {
  if (adapters.empty()) return {};
  const auto* table = &adapters;
  return [table](std::size_t layer, Projection which, const Tensor& x, const Tensor& w0) {
    auto it = table->find(AdapterKey{layer, which});
    if (it == table->end()) return ops::linear(x, w0);
    const LoraAdapter& ad = it->second;
    return lora_forward(w0, ad.a, ad.b, ad.scale(), x);
  };
}

Model LoraModel::effective_base() const {
  if (!quantized) return base;
  return quantized->materialize();
}

std::vector<NamedTensor> LoraModel::adapter_parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& [key, ad] : adapters) {
    out.push_back({ad.name_prefix() + ".A", ad.a});
    out.push_back({ad.name_prefix() + ".B", ad.b});
  }
  return out;
}

ForwardOutput forward(const LoraModel& model, const TokenBatch& tokens) {
  if (model.quantized) return forward(model.quantized->materialize(), tokens, model.hook());
  return forward(model.base, tokens, model.hook());
}

Model merge_adapters(LoraModel& model) {
  if (model.adapters.empty()) throw ValueError("merge_adapters: the model has no adapters to merge");
  Model merged = model.effective_base().clone();
  const auto& k = kernels::active();
  for (const auto& [key, ad] : model.adapters) {
    Tensor& w = base_weight(merged, key);
    const std::size_t out_dim = ad.b.dim(0);
    const std::size_t in_dim = ad.a.dim(1);
    std::vector<double> delta(out_dim * in_dim, 0.0);
    k.gemm_acc(out_dim, in_dim, ad.rank, ad.b.data().data(), ad.a.data().data(), delta.data());
    k.axpy(delta.size(), ad.scale(), delta.data(), w.mutable_data().data());
  }
  merged.set_requires_grad(false);
  model.adapters.clear();
  return merged;
}

ParameterReport trainable_parameter_report(const Model& model) {
  ParameterReport report;
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  for (const auto& p : model.named_parameters()) (p.tensor.requires_grad() ? trainable : frozen) += p.tensor.numel();
  report.trainable_count = trainable;
  report.frozen_count = frozen;
  report.groups.push_back({"base", frozen, false});
  if (trainable) report.groups.push_back({"base.trainable", trainable, true});
  return report;
}

ParameterReport trainable_parameter_report(const LoraModel& model, const EciHead* eci) {
  ParameterReport report = trainable_parameter_report(model.base);
  std::map<std::string, std::size_t> lora_groups;
  for (const auto& [key, ad] : model.adapters)
    lora_groups["lora." + projection_name(key.target)] += ad.a.numel() + ad.b.numel();
  for (const auto& [name, count] : lora_groups) {
    report.groups.push_back({name, count, true});
    report.trainable_count += count;
  }
  if (eci != nullptr) {
    std::size_t count = 0;
    for (const auto& p : eci->named_parameters()) count += p.tensor.numel();
    report.groups.push_back({"eci", count, true});
    report.trainable_count += count;
  }
  return report;
}

}  // namespace eciwb
