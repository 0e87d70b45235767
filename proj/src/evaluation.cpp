// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <thread>

#include "eciwb/eci.hpp"
#include "eciwb/error.hpp"
#include "eciwb/metrics.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/tokenizer.hpp"

namespace eciwb {

using nlohmann::json;

std::string mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::kFreetext:
      return "freetext";
    case EvalMode::kEci:
      return "eci";
    case EvalMode::kBoth:
      return "both";
  }
  return "both";
}

EvalMode parse_mode(const std::string& s) {
  if (s == "freetext") return EvalMode::kFreetext;
  if (s == "eci") return EvalMode::kEci;
  if (s == "both") return EvalMode::kBoth;
  throw ConfigError("unknown eval mode '" + s + "' (expected freetext, eci or both)");
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json echo_json(const ModelEcho& e) {
  return {{"method", e.method}, {"size", e.size}, {"quantization", e.quantization}, {"fine_tuned", e.fine_tuned}};
}

ModelEcho echo_from_json(const json& j) {
  ModelEcho e;
  e.method = j.at("method").get<std::string>();
  e.size = j.at("size").get<std::string>();
  e.quantization = j.at("quantization").get<bool>();
  e.fine_tuned = j.at("fine_tuned").get<bool>();
  return e;
}

class ScriptedModel final : public EvalModel {
 public:
  explicit ScriptedModel(ScriptedConfig script) : script_(std::move(script)) {
    if (script_.class_names.empty()) throw ValueError("scripted model: no class names");
    for (const auto& [id, logits] : script_.eci_logits)
      if (logits.size() != script_.class_names.size())
        throw ValueError("scripted model: logits for '" + id + "' do not match the class count");
  }
  std::vector<std::string> class_names() const override { return script_.class_names; }
  bool has_eci() const override { return true; }
  ModelEcho echo() const override { return script_.echo; }

  PathOutputs run(const BenchmarkRecord& record, const std::string&, bool want_text, bool want_eci,
                  std::size_t) const override {
    PathOutputs out;
    if (want_text) {
      auto it = script_.responses.find(record.id);
      out.text = it != script_.responses.end() ? it->second : script_.default_response;
    }
    if (want_eci) {
      auto it = script_.eci_logits.find(record.id);
      if (it != script_.eci_logits.end()) {
        out.eci_logits = it->second;
      } else {
        Rng rng(script_.seed ^ fnv1a(record.id));
        std::vector<double> logits(script_.class_names.size());
        for (double& l : logits) l = rng.normal();
        out.eci_logits = std::move(logits);
      }
    }
    return out;
  }

 private:
  ScriptedConfig script_;
};

class TrainedModel final : public EvalModel {
 public:
  TrainedModel(TrainingBundle bundle, ModelEcho echo)
      : bundle_(std::move(bundle)), base_(bundle_.model.effective_base()), echo_(std::move(echo)) {
    seq_len_ = bundle_.eci ? bundle_.eci->config.seq_len : base_.config.max_seq_len;
    if (seq_len_ > base_.config.max_seq_len)
      throw ValueError("checkpoint: classification sequence length exceeds the model's max_seq_len");
  }
  std::vector<std::string> class_names() const override {
    return bundle_.eci ? bundle_.eci->config.class_names : std::vector<std::string>{};
  }
  bool has_eci() const override { return bundle_.eci.has_value(); }
  ModelEcho echo() const override { return echo_; }

  PathOutputs run(const BenchmarkRecord&, const std::string& prompt, bool want_text, bool want_eci,
                  std::size_t max_new_tokens) const override {
    const ProjectionHook hook = bundle_.model.hook();
    const auto ids = encode(prompt);
    const std::size_t used = std::min(ids.size(), seq_len_);
    std::vector<std::int64_t> window(ids.end() - static_cast<std::ptrdiff_t>(used), ids.end());
    if (window.empty()) window.push_back(kPadId);
    std::vector<std::int64_t> padded = window;
    padded.resize(seq_len_, kPadId);
    std::vector<std::uint8_t> keep(seq_len_, 0);
    std::fill(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(window.size()), 1);

    // One pass over the padded prompt feeds the head and the first decoding step.
    const ForwardOutput first = forward(base_, TokenBatch{padded, 1, seq_len_}, hook);
    PathOutputs out;
    if (want_eci) {
      const EciOutput e = eci_forward(*bundle_.eci, first.last_hidden, keep);
      out.eci_logits = std::vector<double>(e.logits.data().begin(), e.logits.data().end());
    }
    if (want_text) {
      const std::size_t vocab = base_.config.vocab_size;
      std::vector<std::int64_t> generated;
      std::vector<std::int64_t> ctx = window;
      auto logits = first.logits.data().subspan((window.size() - 1) * vocab, vocab);
      std::vector<double> row(logits.begin(), logits.end());
      for (std::size_t step = 0; step < max_new_tokens; ++step) {
        const auto next = static_cast<std::int64_t>(argmax(row));
        if (next == kEosId) break;
        generated.push_back(next);
        ctx.push_back(next);
        if (ctx.size() > base_.config.max_seq_len) ctx.erase(ctx.begin());
        if (step + 1 == max_new_tokens) break;
        const ForwardOutput o = forward(base_, TokenBatch{ctx, 1, ctx.size()}, hook);
        const auto r = o.logits.data().subspan((ctx.size() - 1) * vocab, vocab);
        row.assign(r.begin(), r.end());
      }
      out.text = decode(generated);
    }
    return out;
  }

 private:
  TrainingBundle bundle_;
  Model base_;
  ModelEcho echo_;
  std::size_t seq_len_ = 0;
};

std::string size_label(std::size_t params) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(params) / 1e6);
  return buf;
}

ModeResult summarize(EvalMode mode, std::vector<RecordOutcome> outcomes) {
  ModeResult r;
  r.mode = mode;
  r.n_items = outcomes.size();
  std::vector<std::string> preds, gold;
  std::size_t failures = 0;
  for (const auto& o : outcomes) {
    preds.push_back(o.prediction.value_or(""));
    gold.push_back(o.gold);
    if (!o.prediction) ++failures;
  }
  if (!outcomes.empty()) {
    r.accuracy = accuracy(preds, gold);
    r.parse_failure_rate = static_cast<double>(failures) / static_cast<double>(outcomes.size());
  }
  r.outcomes = std::move(outcomes);
  return r;
}

}  // namespace

Checkpoint make_scripted_checkpoint(const ScriptedConfig& script) {
  Checkpoint ckpt;
  ckpt.metadata = {{"kind", "scripted"},
                   {"class_names", script.class_names},
                   {"responses", script.responses},
                   {"default_response", script.default_response},
                   {"eci_logits", script.eci_logits},
                   {"seed", script.seed},
                   {"echo", echo_json(script.echo)}};
  return ckpt;
}

std::unique_ptr<EvalModel> make_scripted_model(const ScriptedConfig& script) { return std::make_unique<ScriptedModel>(script); }

std::unique_ptr<EvalModel> make_trained_model(TrainingBundle bundle, ModelEcho echo) {
  return std::make_unique<TrainedModel>(std::move(bundle), std::move(echo));
}

std::unique_ptr<EvalModel> load_eval_model(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  const std::string kind = ckpt.metadata.value("kind", "");
  if (kind == "scripted") {
    try {
      const json& m = ckpt.metadata;
      ScriptedConfig script;
      script.class_names = m.at("class_names").get<std::vector<std::string>>();
      script.responses = m.at("responses").get<std::map<std::string, std::string>>();
      script.default_response = m.at("default_response").get<std::string>();
      script.eci_logits = m.at("eci_logits").get<std::map<std::string, std::vector<double>>>();
      script.seed = m.at("seed").get<std::uint64_t>();
      script.echo = echo_from_json(m.at("echo"));
      return make_scripted_model(script);
    } catch (const json::exception& e) {
      throw FormatError(FormatError::Kind::kCorrupt, std::string("scripted checkpoint metadata invalid: ") + e.what());
    }
  }
  TrainingBundle bundle = bundle_from_checkpoint(ckpt);
  ModelEcho echo;
  const json extra = bundle.extra;
  echo.method = extra.value("method", bundle.eci ? std::string("LoRA + ECI") : std::string("LoRA"));
  std::size_t params = parameter_count(bundle.model.base.config);
  for (const auto& p : bundle.model.adapter_parameters()) params += p.tensor.numel();
  if (bundle.eci) params += bundle.eci->parameter_count();
  echo.size = size_label(params);
  echo.quantization = bundle.model.quantized != nullptr;
  echo.fine_tuned = bundle.state.step > 0;
  return make_trained_model(std::move(bundle), echo);
}

EvalReport evaluate(const EvalModel& model, const std::vector<BenchmarkRecord>& records, const EvalOptions& options) {
  const bool want_text = options.mode != EvalMode::kEci;
  const bool want_eci = options.mode != EvalMode::kFreetext;
  const auto classes = model.class_names();
  if (want_eci) {
    if (!model.has_eci()) throw DataError("checkpoint has no classification head; eci mode is unavailable");
    const std::set<std::string> class_set(classes.begin(), classes.end());
    for (const auto& r : records)
      for (const auto& label : r.labels())
        if (!class_set.count(label))
          throw DataError("class-set mismatch: record '" + r.id + "' has label '" + label +
                          "' that the checkpoint's classes do not include");
  }

  std::vector<PathOutputs> outputs(records.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < records.size(); i += stride)
      outputs[i] = model.run(records[i], build_shots(options.prompt, records[i]), want_text, want_eci,
                             options.max_new_tokens);
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, records.size()));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          work(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  EvalReport report;
  report.config = model.echo();
  report.metadata["metric_text"] = "full_continuation";
  report.metadata["mode"] = mode_name(options.mode);
  report.metadata["prompt_style"] = options.prompt.style == PromptStyle::kThreeStep ? "three_step" : "plain";
  report.metadata["shots"] = options.prompt.shots;

  if (want_text) {
    std::vector<RecordOutcome> outcomes;
    std::vector<std::string> cands, refs;
    for (std::size_t i = 0; i < records.size(); ++i) {
      RecordOutcome o;
      o.id = records[i].id;
      o.gold = records[i].gold;
      o.response = *outputs[i].text;
      const Extraction e = extract_answer(*o.response, records[i].labels());
      o.prediction = e.label;
      o.failure = e.failure;
      o.correct = e.label && accuracy(std::vector<std::string>{*e.label}, std::vector<std::string>{o.gold}) == 1.0;
      if (records[i].reference) {
        cands.push_back(*o.response);
        refs.push_back(*records[i].reference);
      }
      outcomes.push_back(std::move(o));
    }
    report.modes.push_back(summarize(EvalMode::kFreetext, std::move(outcomes)));
    // Empty generations are skipped by BLEU, which needs a nonempty candidate.
    std::vector<std::string> c2, r2;
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (!tokenize(cands[i]).empty()) {
        c2.push_back(cands[i]);
        r2.push_back(refs[i]);
      }
    if (!c2.empty()) {
      const MetricReport m = score_corpus(c2, r2, 4, 1);
      report.metrics = TextMetrics{m.bleu.bleu, m.rouge.recall};
      report.metadata["metric_pairs"] = c2.size();
    }
  }
  if (want_eci) {
    std::vector<RecordOutcome> outcomes;
    for (std::size_t i = 0; i < records.size(); ++i) {
      RecordOutcome o;
      o.id = records[i].id;
      o.gold = records[i].gold;
      const auto& logits = *outputs[i].eci_logits;
      o.prediction = classes.at(argmax(logits));
      o.correct = accuracy(std::vector<std::string>{*o.prediction}, std::vector<std::string>{o.gold}) == 1.0;
      outcomes.push_back(std::move(o));
    }
    report.modes.push_back(summarize(EvalMode::kEci, std::move(outcomes)));
  }
  return report;
}

json to_json(const EvalReport& report) {
  json modes = json::array();
  for (const auto& m : report.modes) {
    json outcomes = json::array();
    for (const auto& o : m.outcomes) {
      json j = {{"id", o.id}, {"gold", o.gold}, {"correct", o.correct}};
      j["prediction"] = o.prediction ? json(*o.prediction) : json(nullptr);
      j["failure"] = o.failure ? json(reason_name(*o.failure)) : json(nullptr);
      if (o.response) j["response"] = *o.response;
      outcomes.push_back(std::move(j));
    }
    modes.push_back({{"mode", mode_name(m.mode)},
                     {"accuracy", m.accuracy},
                     {"parse_failure_rate", m.parse_failure_rate},
                     {"n_items", m.n_items},
                     {"outcomes", outcomes}});
  }
  json j = {{"columns", report.columns}, {"config", echo_json(report.config)}, {"modes", modes},
            {"metadata", report.metadata}};
  j["metrics"] = report.metrics ? json{{"bleu4", report.metrics->bleu4}, {"rouge1", report.metrics->rouge1}}
                                : json(nullptr);
  return j;
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.columns = j.at("columns").get<std::vector<std::string>>();
    r.config = echo_from_json(j.at("config"));
    r.metadata = j.value("metadata", json::object());
    if (j.contains("metrics") && !j["metrics"].is_null())
      r.metrics = TextMetrics{j["metrics"].at("bleu4").get<double>(), j["metrics"].at("rouge1").get<double>()};
    for (const auto& m : j.at("modes")) {
      ModeResult mr;
      mr.mode = parse_mode(m.at("mode").get<std::string>());
      mr.accuracy = m.at("accuracy").get<double>();
      mr.parse_failure_rate = m.at("parse_failure_rate").get<double>();
      mr.n_items = m.at("n_items").get<std::size_t>();
      for (const auto& o : m.value("outcomes", json::array())) {
        RecordOutcome ro;
        ro.id = o.at("id").get<std::string>();
        ro.gold = o.at("gold").get<std::string>();
        ro.correct = o.at("correct").get<bool>();
        if (!o.at("prediction").is_null()) ro.prediction = o["prediction"].get<std::string>();
        if (!o.at("failure").is_null())
          ro.failure = o["failure"].get<std::string>() == "ambiguous" ? UnparseableReason::kAmbiguous
                                                                      : UnparseableReason::kNoLabel;
        if (o.contains("response")) ro.response = o["response"].get<std::string>();
        mr.outcomes.push_back(std::move(ro));
      }
      r.modes.push_back(std::move(mr));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("eval report is malformed: ") + e.what());
  }
  return r;
}

}  // namespace eciwb
