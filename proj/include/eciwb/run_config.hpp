// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The JSON document driving `eciwb train`. Every section is optional except
// data.train; unknown keys anywhere are rejected. Relative paths resolve
// against the config file's directory.
//
// {
//   "model":        ModelConfig fields,
//   "lora":         {"targets", "rank", "alpha"},
//   "eci":          EciConfig fields (seq_len / d_model default to the model's),
//   "training":     TrainConfig fields,
//   "quantization": {"enabled", "block_size", "double_quant"},
//   "prompt":       {"style": "three_step" | "plain", "shots", "exemplars"},
//   "data":         {"train", "eval"},
//   "eval":         {"mode", "max_new_tokens", "workers"},
//   "output":       {"checkpoint", "loss_csv", "checkpoint_every"},
//   "method":       row label for reports,
//   "seed":         overrides training.seed
// }

#include <optional>
#include <string>

#include <json.hpp>

#include "eciwb/eci.hpp"
#include "eciwb/evaluation.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/prompts.hpp"
#include "eciwb/training.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

struct QuantizationConfig {
  bool enabled = false;
  std::size_t block_size = 64;
  bool double_quant = false;
};

struct RunConfig {
  ModelConfig model;
  LoraConfig lora;
  EciConfig eci;
  TrainConfig training;
  QuantizationConfig quantization;
  PromptStyle prompt_style = PromptStyle::kThreeStep;
  std::size_t shots = 0;
  std::optional<std::string> exemplars_path;
  std::string train_path;
  std::optional<std::string> eval_path;
  EvalMode eval_mode = EvalMode::kBoth;
  std::size_t max_new_tokens = 32;
  std::size_t workers = 1;
  std::string checkpoint_path = "checkpoint.ecif";
  std::string loss_csv_path = "loss.csv";
  std::size_t checkpoint_every = 0;
  std::string method = "LoRA + ECI";

  // Cross-section checks: validates every section and their agreement.
  void validate() const;
};

// Throws ConfigError on any schema violation.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);

}  // namespace eciwb
