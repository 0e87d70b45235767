// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "eciwb/error.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValueError("train config: lambda must lie in [0, 1]");
  if (!(lr_start > 0.0)) throw ValueError("train config: lr_start must be positive");
  if (total_steps == 0) throw ValueError("train config: total_steps must be positive");
  if (batch_size == 0) throw ValueError("train config: batch_size must be positive");
  if (weight_decay < 0.0) throw ValueError("train config: weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValueError("train config: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ValueError("train config: eps must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw ValueError("train config: grad_clip must be positive");
}

TrainExample make_train_example(std::span<const std::int64_t> prompt_ids, std::span<const std::int64_t> answer_ids,
                                std::int64_t class_target, std::size_t seq_len, std::int64_t pad_id) {
  if (answer_ids.empty()) throw ValueError("train example: empty answer");
  if (answer_ids.size() + 1 > seq_len)
    throw ValueError("train example: answer of " + std::to_string(answer_ids.size()) +
                     " tokens does not fit sequence length " + std::to_string(seq_len));
  if (prompt_ids.empty()) throw ValueError("train example: empty prompt");
  // Keep the tail of the prompt: it carries the options and the answer cue.
  const std::size_t room = seq_len - answer_ids.size();
  const auto prompt = prompt_ids.size() > room ? prompt_ids.subspan(prompt_ids.size() - room) : prompt_ids;

  TrainExample ex;
  ex.class_target = class_target;
  ex.token_ids.assign(prompt.begin(), prompt.end());
  ex.token_ids.insert(ex.token_ids.end(), answer_ids.begin(), answer_ids.end());
  const std::size_t used = ex.token_ids.size();
  ex.token_ids.resize(seq_len, pad_id);
  ex.textgen_targets.assign(seq_len, kIgnoreIndex);
  // Position i predicts token i + 1; only answer tokens are supervised.
  for (std::size_t i = prompt.size() - 1; i + 1 < used; ++i) ex.textgen_targets[i] = ex.token_ids[i + 1];

  // The classifier sees the whole prompt when it fits.
  const auto eci_prompt = prompt_ids.size() > seq_len ? prompt_ids.subspan(prompt_ids.size() - seq_len) : prompt_ids;
  ex.eci_token_ids.assign(eci_prompt.begin(), eci_prompt.end());
  ex.eci_keep.assign(eci_prompt.size(), 1);
  ex.eci_token_ids.resize(seq_len, pad_id);
  ex.eci_keep.resize(seq_len, 0);
  return ex;
}

TrainBatch collate(std::span<const TrainExample* const> examples) {
  if (examples.empty()) throw ValueError("collate: empty batch");
  TrainBatch batch;
  batch.batch = examples.size();
  batch.seq = examples.front()->token_ids.size();
  for (const TrainExample* ex : examples) {
    if (ex->token_ids.size() != batch.seq || ex->textgen_targets.size() != batch.seq ||
        ex->eci_token_ids.size() != batch.seq || ex->eci_keep.size() != batch.seq)
      throw ShapeError("collate: examples disagree on sequence length");
    batch.token_ids.insert(batch.token_ids.end(), ex->token_ids.begin(), ex->token_ids.end());
    batch.textgen_targets.insert(batch.textgen_targets.end(), ex->textgen_targets.begin(), ex->textgen_targets.end());
    batch.eci_token_ids.insert(batch.eci_token_ids.end(), ex->eci_token_ids.begin(), ex->eci_token_ids.end());
    batch.eci_keep.insert(batch.eci_keep.end(), ex->eci_keep.begin(), ex->eci_keep.end());
    batch.class_targets.push_back(ex->class_target);
  }
  return batch;
}

JointLoss joint_loss(const Tensor& logits, std::span<const std::int64_t> textgen_targets, const Tensor& eci_logits,
                     std::span<const std::int64_t> class_targets, double lambda, ops::Reduction textgen_reduction) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValueError("joint_loss: lambda must lie in [0, 1]");
  JointLoss out;
  out.textgen = ops::cross_entropy(logits, textgen_targets, kIgnoreIndex, textgen_reduction);
  out.eci = ops::cross_entropy(eci_logits, class_targets);
  out.total = ops::add(ops::scale(out.textgen, 1.0 - lambda), ops::scale(out.eci, lambda));
  return out;
}

void adamw_step(std::span<const NamedTensor> params, AdamState& state, double lr, const TrainConfig& config) {
  if (lr < 0.0) throw ValueError("adamw_step: negative learning rate");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - lr * config.weight_decay;
  for (const NamedTensor& p : params) {
    Tensor param = p.tensor;
    if (!param.requires_grad()) continue;
    const std::size_t n = param.numel();
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.empty()) m.assign(n, 0.0);
    if (v.empty()) v.assign(n, 0.0);
    if (m.size() != n || v.size() != n)
      throw ShapeError("adamw_step: optimizer state for '" + p.name + "' does not match " + shape_str(param.shape()));
    const auto grad = param.grad();
    auto w = param.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * (g * g);
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] = w[i] * decay;
      w[i] = w[i] - lr * (m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

double lr_at(std::size_t step, const TrainConfig& config) {
  if (step > config.total_steps)
    throw ValueError("lr_at: step " + std::to_string(step) + " is past total_steps " +
                     std::to_string(config.total_steps));
  const double frac = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return std::max(0.0, config.lr_start * (1.0 - frac));
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch_size,
                                       std::size_t dataset_size) {
  if (dataset_size == 0) throw ValueError("batch_indices: empty dataset");
  // Positions run through a fresh permutation per epoch.
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::size_t cached_epoch = SIZE_MAX;
  std::vector<std::size_t> perm(dataset_size);
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::size_t pos = step * batch_size + j;
    const std::size_t epoch = pos / dataset_size;
    if (epoch != cached_epoch) {
      for (std::size_t i = 0; i < dataset_size; ++i) perm[i] = i;
      Rng rng(seed * 0x9E3779B97F4A7C15ull + epoch + 1);
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % dataset_size]);
  }
  return out;
}

std::vector<NamedTensor> trainable_parameters(const LoraModel& model, const EciHead& head) {
  std::vector<NamedTensor> params = model.adapter_parameters();
  for (auto& p : head.named_parameters()) params.push_back(p);
  return params;
}

double classification_accuracy(const LoraModel& model, const EciHead& head, std::span<const TrainExample> data,
                               std::size_t batch_size) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    std::vector<const TrainExample*> ptrs;
    for (std::size_t i = 0; i < count; ++i) ptrs.push_back(&data[start + i]);
    const TrainBatch batch = collate(ptrs);
    const ForwardOutput fwd = forward(model, TokenBatch{batch.eci_token_ids, batch.batch, batch.seq});
    const EciOutput eci = eci_forward(head, fwd.last_hidden, batch.eci_keep);
    for (std::size_t i = 0; i < count; ++i)
      if (static_cast<std::int64_t>(eci.predicted[i]) == batch.class_targets[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainReport train(LoraModel& model, EciHead& head, std::span<const TrainExample> data, const TrainConfig& config,
                  TrainState& state, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw ValueError("train: empty dataset");
  const std::vector<NamedTensor> params = trainable_parameters(model, head);
  const std::size_t end = std::min(config.total_steps, options.stop_at.value_or(config.total_steps));
  TrainReport report;

  for (std::size_t step = state.step; step < end; ++step) {
    const auto indices = batch_indices(config.seed, step, config.batch_size, data.size());
    std::vector<const TrainExample*> ptrs;
    for (std::size_t i : indices) ptrs.push_back(&data[i]);
    const TrainBatch batch = collate(ptrs);

    StepRecord rec;
    rec.step = step;
    rec.lr = lr_at(step, config);
    {
      Tape tape;
      TapeScope scope(tape);
      const ForwardOutput text = forward(model, TokenBatch{batch.token_ids, batch.batch, batch.seq});
      const ForwardOutput prompt = forward(model, TokenBatch{batch.eci_token_ids, batch.batch, batch.seq});
      const EciOutput eci = eci_forward(head, prompt.last_hidden, batch.eci_keep);
      const JointLoss loss = joint_loss(text.logits, batch.textgen_targets, eci.logits, batch.class_targets,
                                        config.lambda, config.textgen_reduction);
      rec.loss = loss.total.item();
      rec.l_textgen = loss.textgen.item();
      rec.l_eci = loss.eci.item();
      if (!std::isfinite(rec.loss))
        throw NanLossError("train: non-finite loss at step " + std::to_string(step), static_cast<long>(step));
      backward(loss.total);
    }
    if (config.grad_clip) clip_grad_norm(params, *config.grad_clip);
    adamw_step(params, state.adam, rec.lr, config);
    for (const auto& p : params) {
      Tensor t = p.tensor;
      t.clear_grad();
    }
    state.step = step + 1;
    report.steps.push_back(rec);
    if (options.on_step) options.on_step(rec);
    if (options.checkpoint_every && state.step % options.checkpoint_every == 0 && options.on_checkpoint)
      options.on_checkpoint(state);
    if (options.eval_every && state.step % options.eval_every == 0) {
      const double acc = classification_accuracy(model, head, data);
      report.accuracy_checks.push_back({state.step, acc});
      if (options.stop_on_perfect_accuracy && acc == 1.0) break;
    }
  }
  report.final_train_accuracy = classification_accuracy(model, head, data);
  return report;
}

std::string train_report_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "step,lr,loss,l_textgen,l_eci\n";
  char buf[160];
  for (const auto& r : report.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lr, r.loss, r.l_textgen, r.l_eci);
    out << buf;
  }
  return out.str();
}

}  // namespace eciwb
