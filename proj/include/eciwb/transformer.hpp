// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Toy decoder-only transformer: learned token and position embeddings,
// pre-RMS-norm causal multi-head attention, SiLU feed-forward, final RMS norm
// and an untied LM head. It exposes both the vocabulary logits and the
// normalized last hidden states that the classification head consumes.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "eciwb/tensor.hpp"

namespace eciwb {

struct ModelConfig {
  std::size_t vocab_size = 258;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 8;
  std::size_t max_seq_len = 128;
  std::size_t ff_mult = 4;
  double norm_eps = 1e-6;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws ValueError on an invalid combination.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct DecoderLayer {
  Tensor attn_norm;  // [d]
  Tensor wq, wk, wv, wo;  // [d, d], stored [out, in]
  Tensor ffn_norm;  // [d]
  Tensor w_up;  // [ff_mult * d, d]
  Tensor w_down;  // [d, ff_mult * d]
};

struct Model {
  ModelConfig config;
  Tensor tok_emb;  // [V, d]
  Tensor pos_emb;  // [max_seq_len, d]
  std::vector<DecoderLayer> layers;
  Tensor final_norm;  // [d]
  Tensor lm_head;  // [V, d]

  // Stable order, names like "tok_emb" or "layers.1.wq".
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;
  // Deep copy with fresh storage.
  Model clone() const;
  void set_requires_grad(bool value);
};

// Closed-form parameter count for a config.
std::size_t parameter_count(const ModelConfig& config);

Model init_model(const ModelConfig& config, std::uint64_t seed);

enum class Projection { kQuery, kKey, kValue, kOutput };

// Replaces the attention projection x W^T. Receives the layer, the projection
// and the frozen base weight; LoRA installs one of these.
using ProjectionHook =
    std::function<Tensor(std::size_t layer, Projection which, const Tensor& x, const Tensor& base_weight)>;

// Row-major [batch, seq] token ids.
struct TokenBatch {
  std::vector<std::int64_t> ids;
  std::size_t batch = 0;
  std::size_t seq = 0;
};

struct ForwardOutput {
  Tensor logits;  // [b, s, V]
  Tensor last_hidden;  // [b, s, d], after the final norm
};

ForwardOutput forward(const Model& model, const TokenBatch& tokens, const ProjectionHook& hook = {});

// Causal multi-head attention of one layer, before the output projection.
// h is the normalized input [b, s, d]; the result is the concatenated heads.
Tensor attention_heads(const Model& model, std::size_t layer, const Tensor& h,
                       const ProjectionHook& hook = {});

struct GenerateOptions {
  std::size_t max_new_tokens = 16;
  std::int64_t eos_id = -1;  // < 0 disables early stop
};

// Greedy decoding. Returns the prompt followed by the generated tokens; the
// end-of-sequence token stops generation and is not appended.
std::vector<std::int64_t> generate(const Model& model, std::span<const std::int64_t> prompt,
                                   const GenerateOptions& options, const ProjectionHook& hook = {});

// Position-wise argmax with first-index tie breaking, shared by decoding and
// classification.
std::size_t argmax(std::span<const double> row);

}  // namespace eciwb
