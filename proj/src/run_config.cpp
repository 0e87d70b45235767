// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/run_config.hpp"

#include <filesystem>
#include <fstream>

#include "eciwb/config_json.hpp"
#include "eciwb/error.hpp"

namespace eciwb {

using nlohmann::json;

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

std::string str(const json& j, const char* key, const char* where) {
  if (!j.at(key).is_string()) throw ConfigError(std::string(where) + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

std::size_t size(const json& j, const char* key, const char* where) {
  if (!j.at(key).is_number_unsigned()) throw ConfigError(std::string(where) + "." + key + ": expected a non-negative integer");
  return j.at(key).get<std::size_t>();
}

bool boolean(const json& j, const char* key, const char* where) {
  if (!j.at(key).is_boolean()) throw ConfigError(std::string(where) + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
    // Class names may come from the training data instead.
    EciConfig e = eci;
    if (e.class_names.empty()) e.class_names = {"_"};
    e.validate();
    training.validate();
  } catch (const ValueError& e) {
    throw ConfigError(e.what());
  }
  if (lora.rank == 0) throw ConfigError("lora.rank must be positive");
  if (lora.targets.empty()) throw ConfigError("lora.targets must name at least one projection");
  for (const auto& t : lora.targets) {
    try {
      parse_projection(t);
    } catch (const ValueError& e) {
      throw ConfigError(std::string("lora.targets: ") + e.what());
    }
  }
  if (eci.seq_len != model.max_seq_len) throw ConfigError("eci.seq_len must equal model.max_seq_len");
  if (eci.d_model != model.d_model) throw ConfigError("eci.d_model must equal model.d_model");
  if (quantization.block_size == 0) throw ConfigError("quantization.block_size must be positive");
  if (shots != 0 && shots != 1 && shots != 3) throw ConfigError("prompt.shots must be 0, 1 or 3");
  if (shots > 0 && !exemplars_path) throw ConfigError("prompt.shots > 0 requires prompt.exemplars");
  if (train_path.empty()) throw ConfigError("data.train is required");
}

RunConfig parse_run_config(const json& j, const std::string& base_dir) {
  RunConfig c;
  try {
    reject_unknown_keys(j, {"model", "lora", "eci", "training", "quantization", "prompt", "data", "eval", "output",
                            "method", "seed"},
                        "config");
    if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
    if (j.contains("lora")) c.lora = j["lora"].get<LoraConfig>();
    c.eci.seq_len = c.model.max_seq_len;
    c.eci.d_model = c.model.d_model;
    if (j.contains("eci")) from_json(j["eci"], c.eci);
    if (j.contains("training")) c.training = j["training"].get<TrainConfig>();
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ConfigError("config.seed: expected a non-negative integer");
      c.training.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("quantization")) {
      const json& q = j["quantization"];
      reject_unknown_keys(q, {"enabled", "block_size", "double_quant"}, "quantization");
      if (q.contains("enabled")) c.quantization.enabled = boolean(q, "enabled", "quantization");
      if (q.contains("block_size")) c.quantization.block_size = size(q, "block_size", "quantization");
      if (q.contains("double_quant")) c.quantization.double_quant = boolean(q, "double_quant", "quantization");
    }
    if (j.contains("prompt")) {
      const json& p = j["prompt"];
      reject_unknown_keys(p, {"style", "shots", "exemplars"}, "prompt");
      if (p.contains("style")) {
        const std::string s = str(p, "style", "prompt");
        if (s == "three_step") c.prompt_style = PromptStyle::kThreeStep;
        else if (s == "plain") c.prompt_style = PromptStyle::kPlain;
        else throw ConfigError("prompt.style: expected 'three_step' or 'plain', got '" + s + "'");
      }
      if (p.contains("shots")) c.shots = size(p, "shots", "prompt");
      if (p.contains("exemplars")) c.exemplars_path = resolve(base_dir, str(p, "exemplars", "prompt"));
    }
    if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
    {
      const json& d = j["data"];
      reject_unknown_keys(d, {"train", "eval"}, "data");
      if (!d.contains("train")) throw ConfigError("data.train is required");
      c.train_path = resolve(base_dir, str(d, "train", "data"));
      if (d.contains("eval")) c.eval_path = resolve(base_dir, str(d, "eval", "data"));
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      reject_unknown_keys(e, {"mode", "max_new_tokens", "workers"}, "eval");
      if (e.contains("mode")) c.eval_mode = parse_mode(str(e, "mode", "eval"));
      if (e.contains("max_new_tokens")) c.max_new_tokens = size(e, "max_new_tokens", "eval");
      if (e.contains("workers")) c.workers = size(e, "workers", "eval");
    }
    if (j.contains("output")) {
      const json& o = j["output"];
      reject_unknown_keys(o, {"checkpoint", "loss_csv", "checkpoint_every"}, "output");
      if (o.contains("checkpoint")) c.checkpoint_path = str(o, "checkpoint", "output");
      if (o.contains("loss_csv")) c.loss_csv_path = str(o, "loss_csv", "output");
      if (o.contains("checkpoint_every")) c.checkpoint_every = size(o, "checkpoint_every", "output");
    }
    c.checkpoint_path = resolve(base_dir, c.checkpoint_path);
    c.loss_csv_path = resolve(base_dir, c.loss_csv_path);
    if (j.contains("method")) c.method = str(j, "method", "config");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, std::filesystem::path(path).parent_path().string());
}

}  // namespace eciwb
