// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/transformer.hpp"

#include <cmath>
#include <string>

#include "eciwb/error.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/rng.hpp"

namespace eciwb {

namespace {

constexpr double kInitStd = 0.02;

Tensor project(const ProjectionHook& hook, std::size_t layer, Projection which, const Tensor& x,
               const Tensor& w) {
  if (hook) return hook(layer, which, x, w);
  return ops::linear(x, w);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValueError("model config: " + msg); };
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (d_model == 0) fail("d_model must be positive");
  if (n_layers == 0) fail("n_layers must be positive");
  if (n_heads == 0) fail("n_heads must be positive");
  if (d_model % n_heads != 0)
    fail("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  if (max_seq_len < 2) fail("max_seq_len must be at least 2");
  if (ff_mult == 0) fail("ff_mult must be positive");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t per_layer = 2 * d + 4 * d * d + 2 * c.ff_mult * d * d;
  return c.vocab_size * d + c.max_seq_len * d + c.n_layers * per_layer + d + c.vocab_size * d;
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"tok_emb", tok_emb});
  out.push_back({"pos_emb", pos_emb});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    const DecoderLayer& l = layers[i];
    out.push_back({p + "attn_norm", l.attn_norm});
    out.push_back({p + "wq", l.wq});
    out.push_back({p + "wk", l.wk});
    out.push_back({p + "wv", l.wv});
    out.push_back({p + "wo", l.wo});
    out.push_back({p + "ffn_norm", l.ffn_norm});
    out.push_back({p + "w_up", l.w_up});
    out.push_back({p + "w_down", l.w_down});
  }
  out.push_back({"final_norm", final_norm});
  out.push_back({"lm_head", lm_head});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

Model Model::clone() const {
  Model m;
  m.config = config;
  m.tok_emb = tok_emb.clone();
  m.pos_emb = pos_emb.clone();
  for (const DecoderLayer& l : layers) {
    m.layers.push_back(DecoderLayer{l.attn_norm.clone(), l.wq.clone(), l.wk.clone(), l.wv.clone(),
                                    l.wo.clone(), l.ffn_norm.clone(), l.w_up.clone(), l.w_down.clone()});
  }
  m.final_norm = final_norm.clone();
  m.lm_head = lm_head.clone();
  return m;
}

void Model::set_requires_grad(bool value) {
  for (auto& p : named_parameters()) p.tensor.set_requires_grad(value);
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.d_model;
  const std::size_t ff = config.ff_mult * d;
  Model m;
  m.config = config;
  m.tok_emb = rng.normal_tensor({config.vocab_size, d}, kInitStd);
  m.pos_emb = rng.normal_tensor({config.max_seq_len, d}, kInitStd);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    DecoderLayer l;
    l.attn_norm = Tensor::full({d}, 1.0);
    l.wq = rng.normal_tensor({d, d}, kInitStd);
    l.wk = rng.normal_tensor({d, d}, kInitStd);
    l.wv = rng.normal_tensor({d, d}, kInitStd);
    l.wo = rng.normal_tensor({d, d}, kInitStd);
    l.ffn_norm = Tensor::full({d}, 1.0);
    l.w_up = rng.normal_tensor({ff, d}, kInitStd);
    l.w_down = rng.normal_tensor({d, ff}, kInitStd);
    m.layers.push_back(std::move(l));
  }
  m.final_norm = Tensor::full({d}, 1.0);
  m.lm_head = rng.normal_tensor({config.vocab_size, d}, kInitStd);
  return m;
}

Tensor attention_heads(const Model& model, std::size_t layer, const Tensor& h, const ProjectionHook& hook) {
  const ModelConfig& c = model.config;
  const DecoderLayer& l = model.layers.at(layer);
  const std::size_t b = h.dim(0);
  const std::size_t s = h.dim(1);
  const std::size_t nh = c.n_heads;
  const std::size_t hd = c.head_dim();

  auto split_heads = [&](const Tensor& x) {
    // [b, s, d] -> [b, nh, s, hd]
    return ops::transpose(ops::reshape(x, {b, s, nh, hd}), 1, 2);
  };
  const Tensor q = split_heads(project(hook, layer, Projection::kQuery, h, l.wq));
  const Tensor k = split_heads(project(hook, layer, Projection::kKey, h, l.wk));
  const Tensor v = split_heads(project(hook, layer, Projection::kValue, h, l.wv));

  Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(hd)));
  const Tensor probs = ops::softmax(ops::causal_mask(scores), 3);
  const Tensor heads = ops::matmul(probs, v);  // [b, nh, s, hd]
  return ops::reshape(ops::transpose(heads, 1, 2), {b, s, c.d_model});
}

ForwardOutput forward(const Model& model, const TokenBatch& tokens, const ProjectionHook& hook) {
  const ModelConfig& c = model.config;
  if (tokens.batch == 0 || tokens.seq == 0 || tokens.ids.size() != tokens.batch * tokens.seq)
    throw ShapeError("forward: token batch [" + std::to_string(tokens.batch) + ", " +
                     std::to_string(tokens.seq) + "] holds " + std::to_string(tokens.ids.size()) + " ids");
  if (tokens.seq > c.max_seq_len)
    throw ValueError("forward: sequence length " + std::to_string(tokens.seq) + " exceeds max_seq_len " +
                     std::to_string(c.max_seq_len));
  for (std::int64_t id : tokens.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size)
      throw ValueError("forward: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(c.vocab_size));

  const std::size_t b = tokens.batch;
  const std::size_t s = tokens.seq;
  std::vector<std::int64_t> positions(s);
  for (std::size_t i = 0; i < s; ++i) positions[i] = static_cast<std::int64_t>(i);

  Tensor x = ops::add(ops::embedding(model.tok_emb, tokens.ids, {b, s}), ops::embedding(model.pos_emb, positions, {s}));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const DecoderLayer& l = model.layers[i];
    const Tensor h = ops::rms_norm(x, l.attn_norm, c.norm_eps);
    const Tensor attn = project(hook, i, Projection::kOutput, attention_heads(model, i, h, hook), l.wo);
    x = ops::add(x, attn);
    const Tensor h2 = ops::rms_norm(x, l.ffn_norm, c.norm_eps);
    x = ops::add(x, ops::linear(ops::silu(ops::linear(h2, l.w_up)), l.w_down));
  }
  ForwardOutput out;
  out.last_hidden = ops::rms_norm(x, model.final_norm, c.norm_eps);
  out.logits = ops::linear(out.last_hidden, model.lm_head);
  return out;
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

std::vector<std::int64_t> generate(const Model& model, std::span<const std::int64_t> prompt,
                                   const GenerateOptions& options, const ProjectionHook& hook) {
  if (prompt.empty()) throw ValueError("generate: prompt must be nonempty");
  if (prompt.size() + options.max_new_tokens > model.config.max_seq_len)
    throw ValueError("generate: prompt of " + std::to_string(prompt.size()) + " tokens plus " +
                     std::to_string(options.max_new_tokens) + " new tokens exceeds max_seq_len " +
                     std::to_string(model.config.max_seq_len));
  std::vector<std::int64_t> seq(prompt.begin(), prompt.end());
  const std::size_t vocab = model.config.vocab_size;
  for (std::size_t step = 0; step < options.max_new_tokens; ++step) {
    const ForwardOutput out = forward(model, TokenBatch{seq, 1, seq.size()}, hook);
    const auto logits = out.logits.data().subspan((seq.size() - 1) * vocab, vocab);
    const auto next = static_cast<std::int64_t>(argmax(logits));
    if (next == options.eos_id) break;
    seq.push_back(next);
  }
  return seq;
}

}  // namespace eciwb
