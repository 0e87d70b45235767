// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Joint text-generation + classification training of the LoRA adapters and
// the ECI head:  L = (1 - lambda) * CE_textgen + lambda * CE_eci,
// optimized with AdamW under a linearly decaying learning rate.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eciwb/eci.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/tensor.hpp"

namespace eciwb {

// Target value for positions that carry no text-generation loss (prompt and
// padding).
inline constexpr std::int64_t kIgnoreIndex = -100;

struct TrainConfig {
  double lambda = 0.5;
  double lr_start = 5e-5;
  std::size_t total_steps = 100;
  std::size_t batch_size = 8;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  ops::Reduction textgen_reduction = ops::Reduction::kMean;
  std::optional<double> grad_clip;

  void validate() const;
};

// One training item. token_ids holds prompt + answer (+ eos) padded to the
// model's sequence length; textgen_targets[i] is the token expected after
// position i or kIgnoreIndex. The classification head reads a separate
// prompt-only sequence so the answer tokens never reach it.
struct TrainExample {
  std::vector<std::int64_t> token_ids;
  std::vector<std::int64_t> textgen_targets;
  std::vector<std::int64_t> eci_token_ids;
  std::vector<std::uint8_t> eci_keep;  // 1 for prompt positions, 0 for padding
  std::int64_t class_target = 0;
};

// Builds a TrainExample. The prompt is truncated from the left when prompt +
// answer does not fit in seq_len. Throws ValueError when the answer alone
// does not fit.
TrainExample make_train_example(std::span<const std::int64_t> prompt_ids, std::span<const std::int64_t> answer_ids,
                                 std::int64_t class_target, std::size_t seq_len, std::int64_t pad_id);

struct TrainBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int64_t> token_ids;
  std::vector<std::int64_t> textgen_targets;
  std::vector<std::int64_t> eci_token_ids;
  std::vector<std::uint8_t> eci_keep;
  std::vector<std::int64_t> class_targets;
};

TrainBatch collate(std::span<const TrainExample* const> examples);

struct JointLoss {
  Tensor total;
  Tensor textgen;
  Tensor eci;
};

JointLoss joint_loss(const Tensor& logits, std::span<const std::int64_t> textgen_targets, const Tensor& eci_logits,
                     std::span<const std::int64_t> class_targets, double lambda,
                     ops::Reduction textgen_reduction = ops::Reduction::kMean);

struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Decoupled AdamW:
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
//   p = p (1 - lr wd) - lr * mhat / (sqrt(vhat) + eps)
// Tensors with requires_grad unset are skipped; a trainable tensor without a
// gradient counts as a zero gradient.
void adamw_step(std::span<const NamedTensor> params, AdamState& state, double lr, const TrainConfig& config);

// lr_start * (1 - step / total_steps); throws ValueError past total_steps.
double lr_at(std::size_t step, const TrainConfig& config);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<const NamedTensor> params, double max_norm);

// Dataset indices of the batch used at `step`; depends only on (seed, step).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch_size,
                                       std::size_t dataset_size);

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double l_textgen = 0.0;
  double l_eci = 0.0;
};

struct TrainState {
  std::size_t step = 0;  // next step to run
  AdamState adam;
};

struct TrainOptions {
  // Stop before this step (exclusive) even if total_steps is larger.
  std::optional<std::size_t> stop_at;
  // Measure classification accuracy on the training set every n steps (0: never).
  std::size_t eval_every = 0;
  // With eval_every, stop as soon as the training accuracy reaches 1.
  bool stop_on_perfect_accuracy = false;
  std::function<void(const StepRecord&)> on_step;
  // Called with the state after each step that is a multiple of checkpoint_every.
  std::size_t checkpoint_every = 0;
  std::function<void(const TrainState&)> on_checkpoint;
};

struct AccuracyCheck {
  std::size_t step = 0;  // steps completed when measured
  double accuracy = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<AccuracyCheck> accuracy_checks;
  double final_train_accuracy = 0.0;
};

// The parameters the optimizer updates: adapter A/B tensors then ECI tensors.
std::vector<NamedTensor> trainable_parameters(const LoraModel& model, const EciHead& head);

// ECI accuracy over a dataset, no tape.
double classification_accuracy(const LoraModel& model, const EciHead& head, std::span<const TrainExample> data,
                               std::size_t batch_size = 16);

// Deterministic in (config, data, initial state). Throws NanLossError naming
// the step when the loss stops being finite.
TrainReport train(LoraModel& model, EciHead& head, std::span<const TrainExample> data, const TrainConfig& config,
                  TrainState& state, const TrainOptions& options = {});

// "step,lr,loss,l_textgen,l_eci" with round-trippable doubles.
std::string train_report_csv(const TrainReport& report);

}  // namespace eciwb
