// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/config_json.hpp"

#include <string>

#include "eciwb/error.hpp"

namespace eciwb {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const char* where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

void read_size(const json& j, const char* key, std::size_t& out, const char* where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned()) throw ConfigError(std::string(where) + "." + key + ": expected a non-negative integer");
  out = it->get<std::size_t>();
}

const char* axis_name(PoolAxis a) { return a == PoolAxis::kSequence ? "sequence" : "embedding"; }

PoolAxis parse_axis(const json& j, const char* key) {
  const std::string s = j.at(key).get<std::string>();
  if (s == "sequence") return PoolAxis::kSequence;
  if (s == "embedding") return PoolAxis::kEmbedding;
  throw ConfigError(std::string("eci.") + key + ": expected 'sequence' or 'embedding', got '" + s + "'");
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_layers", c.n_layers},
           {"n_heads", c.n_heads},       {"max_seq_len", c.max_seq_len}, {"ff_mult", c.ff_mult},
           {"norm_eps", c.norm_eps}};
}

void from_json(const json& j, ModelConfig& c) {
  constexpr const char* w = "model";
  reject_unknown_keys(j, {"vocab_size", "d_model", "n_layers", "n_heads", "max_seq_len", "ff_mult", "norm_eps"}, w);
  read_size(j, "vocab_size", c.vocab_size, w);
  read_size(j, "d_model", c.d_model, w);
  read_size(j, "n_layers", c.n_layers, w);
  read_size(j, "n_heads", c.n_heads, w);
  read_size(j, "max_seq_len", c.max_seq_len, w);
  read_size(j, "ff_mult", c.ff_mult, w);
  read(j, "norm_eps", c.norm_eps, w);
}

void to_json(json& j, const LoraConfig& c) {
  j = json{{"targets", c.targets}, {"rank", c.rank}, {"alpha", c.alpha}};
}

void from_json(const json& j, LoraConfig& c) {
  constexpr const char* w = "lora";
  reject_unknown_keys(j, {"targets", "rank", "alpha"}, w);
  read(j, "targets", c.targets, w);
  read_size(j, "rank", c.rank, w);
  read(j, "alpha", c.alpha, w);
}

void to_json(json& j, const EciConfig& c) {
  j = json{{"max_kernel", c.max_kernel},
           {"avg_kernel", c.avg_kernel},
           {"max_axis", axis_name(c.max_axis)},
           {"avg_axis", axis_name(c.avg_axis)},
           {"hidden_widths", c.hidden_widths},
           {"class_names", c.class_names},
           {"seq_len", c.seq_len},
           {"d_model", c.d_model},
           {"mask_padding", c.mask_padding}};
}

void from_json(const json& j, EciConfig& c) {
  constexpr const char* w = "eci";
  reject_unknown_keys(j,
                      {"max_kernel", "avg_kernel", "max_axis", "avg_axis", "hidden_widths", "class_names", "seq_len",
                       "d_model", "mask_padding"},
                      w);
  read_size(j, "max_kernel", c.max_kernel, w);
  read_size(j, "avg_kernel", c.avg_kernel, w);
  if (j.contains("max_axis")) c.max_axis = parse_axis(j, "max_axis");
  if (j.contains("avg_axis")) c.avg_axis = parse_axis(j, "avg_axis");
  read(j, "hidden_widths", c.hidden_widths, w);
  read(j, "class_names", c.class_names, w);
  read_size(j, "seq_len", c.seq_len, w);
  read_size(j, "d_model", c.d_model, w);
  read(j, "mask_padding", c.mask_padding, w);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lambda", c.lambda},
           {"lr_start", c.lr_start},
           {"total_steps", c.total_steps},
           {"batch_size", c.batch_size},
           {"weight_decay", c.weight_decay},
           {"betas", {c.beta1, c.beta2}},
           {"eps", c.eps},
           {"seed", c.seed},
           {"textgen_reduction", c.textgen_reduction == ops::Reduction::kMean ? "mean" : "sum"}};
  j["grad_clip"] = c.grad_clip ? json(*c.grad_clip) : json(nullptr);
}

void from_json(const json& j, TrainConfig& c) {
  constexpr const char* w = "training";
  reject_unknown_keys(j,
                      {"lambda", "lr_start", "total_steps", "batch_size", "weight_decay", "betas", "eps", "seed",
                       "textgen_reduction", "grad_clip"},
                      w);
  read(j, "lambda", c.lambda, w);
  read(j, "lr_start", c.lr_start, w);
  read_size(j, "total_steps", c.total_steps, w);
  read_size(j, "batch_size", c.batch_size, w);
  read(j, "weight_decay", c.weight_decay, w);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw ConfigError("training.betas: expected [beta1, beta2]");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  read(j, "eps", c.eps, w);
  read(j, "seed", c.seed, w);
  if (j.contains("textgen_reduction")) {
    const std::string r = j.at("textgen_reduction").get<std::string>();
    if (r == "mean") c.textgen_reduction = ops::Reduction::kMean;
    else if (r == "sum") c.textgen_reduction = ops::Reduction::kSum;
    else throw ConfigError("training.textgen_reduction: expected 'mean' or 'sum', got '" + r + "'");
  }
  if (j.contains("grad_clip")) {
    const auto& g = j.at("grad_clip");
    if (g.is_null()) c.grad_clip.reset();
    else if (g.is_number()) c.grad_clip = g.get<double>();
    else throw ConfigError("training.grad_clip: expected a number or null");
  }
}

}  // namespace eciwb
