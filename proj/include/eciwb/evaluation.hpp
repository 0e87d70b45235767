// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Benchmark evaluation over two paths: free-text generation followed by
// answer extraction, and the classification head, which always yields a
// label.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eciwb/benchmark.hpp"
#include "eciwb/checkpoint.hpp"
#include "eciwb/extraction.hpp"
#include "eciwb/prompts.hpp"

namespace eciwb {

enum class EvalMode { kFreetext, kEci, kBoth };

std::string mode_name(EvalMode m);
EvalMode parse_mode(const std::string& s);

// Config columns echoed into every report row.
struct ModelEcho {
  std::string method;
  std::string size;
  bool quantization = false;
  bool fine_tuned = false;
};

struct PathOutputs {
  std::optional<std::string> text;
  std::optional<std::vector<double>> eci_logits;  // one per class name
};

class EvalModel {
 public:
  virtual ~EvalModel() = default;
  virtual std::vector<std::string> class_names() const = 0;
  virtual bool has_eci() const = 0;
  virtual ModelEcho echo() const = 0;
  // Must be safe to call concurrently.
  virtual PathOutputs run(const BenchmarkRecord& record, const std::string& prompt, bool want_text, bool want_eci,
                          std::size_t max_new_tokens) const = 0;
};

// Canned model: per-record responses and optional ECI logits; records
// without scripted logits get N(0, 1) logits seeded by (seed, record id).
struct ScriptedConfig {
  std::vector<std::string> class_names;
  std::map<std::string, std::string> responses;
  std::string default_response;
  std::map<std::string, std::vector<double>> eci_logits;
  std::uint64_t seed = 0;
  ModelEcho echo{"Scripted stub", "stub", false, false};
};

Checkpoint make_scripted_checkpoint(const ScriptedConfig& script);
std::unique_ptr<EvalModel> make_scripted_model(const ScriptedConfig& script);
std::unique_ptr<EvalModel> make_trained_model(TrainingBundle bundle, ModelEcho echo);

// Dispatches on the checkpoint's "kind" metadata ("scripted" or "model").
std::unique_ptr<EvalModel> load_eval_model(const std::string& path);

struct RecordOutcome {
  std::string id;
  std::string gold;
  std::optional<std::string> prediction;
  std::optional<UnparseableReason> failure;
  bool correct = false;
  std::optional<std::string> response;  // free-text path only
};

struct ModeResult {
  EvalMode mode = EvalMode::kFreetext;
  double accuracy = 0.0;
  double parse_failure_rate = 0.0;
  std::size_t n_items = 0;
  std::vector<RecordOutcome> outcomes;
};

struct TextMetrics {
  double bleu4 = 0.0;
  double rouge1 = 0.0;
};

inline const std::vector<std::string> kReportColumns{"Methods", "Size",    "Quantization", "Fine-tuning",
                                                     "BLEU-4",  "ROUGE-1", "Accuracy"};

struct EvalReport {
  ModelEcho config;
  std::vector<ModeResult> modes;
  std::optional<TextMetrics> metrics;
  std::vector<std::string> columns = kReportColumns;
  nlohmann::json metadata = nlohmann::json::object();
};

struct EvalOptions {
  EvalMode mode = EvalMode::kBoth;
  PromptTemplate prompt;
  std::size_t max_new_tokens = 32;
  std::size_t workers = 1;
};

// Throws DataError when a record's labels are not all classes of the model.
EvalReport evaluate(const EvalModel& model, const std::vector<BenchmarkRecord>& records, const EvalOptions& options);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace eciwb
