// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/eci.hpp"

#include <cmath>

#include "eciwb/error.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

namespace {

struct PooledDims {
  std::size_t seq = 0;
  std::size_t emb = 0;
};

PooledDims pooled_dims(std::size_t s, std::size_t d, std::size_t max_kernel, std::size_t avg_kernel,
                       PoolAxis max_axis) {
  if (max_kernel == 0 || avg_kernel == 0) throw ValueError("eci: pooling kernels must be >= 1");
  const std::size_t seq_kernel = max_axis == PoolAxis::kSequence ? max_kernel : avg_kernel;
  const std::size_t emb_kernel = max_axis == PoolAxis::kSequence ? avg_kernel : max_kernel;
  if (s < seq_kernel || d < emb_kernel)
    throw ValueError("eci: pooling collapses a dimension (s=" + std::to_string(s) + ", d=" + std::to_string(d) +
                     ", kernels " + std::to_string(seq_kernel) + "/" + std::to_string(emb_kernel) + ")");
  return {ops::pooled_length(s, seq_kernel, seq_kernel), ops::pooled_length(d, emb_kernel, emb_kernel)};
}

}  // namespace

void EciConfig::validate() const {
  if (class_names.empty()) throw ValueError("eci: at least one class is required");
  if (max_axis == avg_axis) throw ValueError("eci: max and average pooling must use different axes");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw ValueError("eci: hidden widths must be positive");
  pooled_dims(seq_len, d_model, max_kernel, avg_kernel, max_axis);
}

namespace {

EciParamCount count_from(PooledDims p, std::span<const std::size_t> hidden_widths, std::size_t num_classes) {
  if (num_classes == 0) throw ValueError("eci: at least one class is required");
  EciParamCount out;
  out.pooled_seq = p.seq;
  out.pooled_emb = p.emb;
  out.flatten_width = p.seq * p.emb;
  std::size_t in = out.flatten_width;
  std::vector<std::size_t> widths(hidden_widths.begin(), hidden_widths.end());
  widths.push_back(num_classes);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::size_t params = in * widths[i] + widths[i];
    out.layers.push_back({"eci.mlp." + std::to_string(i), in, widths[i], params});
    out.total += params;
    in = widths[i];
  }
  return out;
}

}  // namespace

EciParamCount eci_param_count(std::size_t seq_len, std::size_t d_model, std::size_t max_kernel,
                              std::size_t avg_kernel, std::span<const std::size_t> hidden_widths,
                              std::size_t num_classes) {
  return count_from(pooled_dims(seq_len, d_model, max_kernel, avg_kernel, PoolAxis::kSequence), hidden_widths,
                    num_classes);
}

EciParamCount eci_param_count(const EciConfig& c) {
  return count_from(pooled_dims(c.seq_len, c.d_model, c.max_kernel, c.avg_kernel, c.max_axis), c.hidden_widths,
                    c.num_classes());
}

std::vector<NamedTensor> EciHead::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back({"eci.mlp." + std::to_string(i) + ".w", weights[i]});
    out.push_back({"eci.mlp." + std::to_string(i) + ".b", biases[i]});
  }
  return out;
}

std::size_t EciHead::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

EciHead init_eci_head(const EciConfig& config, std::uint64_t seed) {
  config.validate();
  const EciParamCount count = eci_param_count(config);
  Rng rng(seed);
  EciHead head;
  head.config = config;
  for (const auto& layer : count.layers) {
    Tensor w = rng.normal_tensor({layer.out, layer.in}, 1.0 / std::sqrt(static_cast<double>(layer.in)));
    Tensor b = Tensor::zeros({layer.out});
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    head.weights.push_back(std::move(w));
    head.biases.push_back(std::move(b));
  }
  return head;
}

EciOutput eci_forward(const EciHead& head, const Tensor& last_hidden, std::span<const std::uint8_t> keep) {
  const EciConfig& c = head.config;
  if (last_hidden.rank() != 3 || last_hidden.dim(1) != c.seq_len || last_hidden.dim(2) != c.d_model)
    throw ShapeError("eci_forward: expected [b, " + std::to_string(c.seq_len) + ", " + std::to_string(c.d_model) +
                     "], got " + shape_str(last_hidden.shape()));
  const std::size_t b = last_hidden.dim(0);
  Tensor x = last_hidden;
  if (c.mask_padding && !keep.empty()) x = ops::mask_positions(x, keep);

  const std::size_t max_axis = c.max_axis == PoolAxis::kSequence ? 1 : 2;
  const std::size_t avg_axis = c.avg_axis == PoolAxis::kSequence ? 1 : 2;
  x = ops::max_pool_1d(x, max_axis, c.max_kernel, c.max_kernel);
  x = ops::avg_pool_1d(x, avg_axis, c.avg_kernel, c.avg_kernel);
  x = ops::flatten(x, 1);
  for (std::size_t i = 0; i < head.weights.size(); ++i) {
    x = ops::add(ops::linear(x, head.weights[i]), head.biases[i]);
    if (i + 1 < head.weights.size()) x = ops::silu(x);
  }
  EciOutput out;
  out.logits = x;
  out.predicted = predict_indices(x);
  out.labels.reserve(b);
  for (std::size_t idx : out.predicted) out.labels.push_back(c.class_names[idx]);
  return out;
}

std::vector<std::size_t> predict_indices(const Tensor& logits) {
  const std::size_t classes = logits.shape().back();
  const std::size_t rows = logits.numel() / classes;
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = argmax(logits.data().subspan(r * classes, classes));
  return out;
}

std::vector<std::string> predict_label(const Tensor& logits, std::span<const std::string> class_names) {
  if (class_names.size() != logits.shape().back())
    throw ShapeError("predict_label: " + std::to_string(class_names.size()) + " class names for logits " +
                     shape_str(logits.shape()));
  std::vector<std::string> out;
  for (std::size_t idx : predict_indices(logits)) out.push_back(class_names[idx]);
  return out;
}

}  // namespace eciwb
