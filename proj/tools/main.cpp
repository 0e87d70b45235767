// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

// eciwb: train, eval, gradcheck, metrics, report.
//
// Exit codes: 0 success, 1 gradient check failure or internal error,
// 2 configuration or usage error, 3 data error, 4 non-finite loss,
// 5 checkpoint format error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "eciwb/benchmark.hpp"
#include "eciwb/checkpoint.hpp"
#include "eciwb/error.hpp"
#include "eciwb/evaluation.hpp"
#include "eciwb/gradcheck.hpp"
#include "eciwb/metrics.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/quantization.hpp"
#include "eciwb/report.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/run_config.hpp"
#include "eciwb/tokenizer.hpp"
#include "eciwb/training.hpp"

using namespace eciwb;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNan = 4, kFormat = 5 };

std::optional<std::uint64_t> seed_override() {
  const char* s = std::getenv("ECIWB_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("ECIWB_SEED must be a non-negative integer, got '") + s + "'");
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<Exemplar> load_exemplars(const std::string& path) {
  // Benchmark records whose "reference" field holds the worked solution.
  std::vector<Exemplar> pool;
  for (auto& r : load_benchmark(path).records) {
    std::string solution = r.reference.value_or("");
    if (!solution.empty() && solution.back() != '\n') solution += "\n";
    solution += answer_line(r.gold);
    pool.push_back({r, solution});
  }
  return pool;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string resume;
  std::size_t stop_at = 0;
};

void make_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = load_run_config(args.config);
  make_parent_dir(cfg.checkpoint_path);
  make_parent_dir(cfg.loss_csv_path);
  if (auto s = seed_override()) cfg.training.seed = *s;
  const std::uint64_t seed = cfg.training.seed;

  const LoadedBenchmark data = load_benchmark(cfg.train_path);
  if (data.records.empty()) throw DataError("training data '" + cfg.train_path + "' holds no usable records");
  if (cfg.eci.class_names.empty()) cfg.eci.class_names = data.records.front().labels();
  const std::set<std::string> classes(cfg.eci.class_names.begin(), cfg.eci.class_names.end());
  for (const auto& r : data.records)
    for (const auto& l : r.labels())
      if (!classes.count(l)) throw DataError("record '" + r.id + "' has label '" + l + "' outside the class set");

  PromptTemplate tmpl;
  tmpl.style = cfg.prompt_style;
  tmpl.shots = cfg.shots;
  tmpl.seed = seed;
  if (cfg.exemplars_path) tmpl.pool = load_exemplars(*cfg.exemplars_path);

  std::vector<TrainExample> examples;
  for (const auto& r : data.records) {
    auto answer = encode(answer_line(r.gold));
    answer.push_back(kEosId);
    const auto cls = std::find(cfg.eci.class_names.begin(), cfg.eci.class_names.end(), r.gold) - cfg.eci.class_names.begin();
    try {
      examples.push_back(make_train_example(encode(build_shots(tmpl, r)), answer, cls, cfg.model.max_seq_len, kPadId));
    } catch (const ValueError& e) {
      throw DataError("record '" + r.id + "': " + e.what());
    }
  }

  LoraModel model;
  EciHead head;
  TrainState state;
  if (!args.resume.empty()) {
    TrainingBundle b = load_checkpoint(args.resume);
    if (!(b.model.base.config == cfg.model)) throw ConfigError("--resume: checkpoint model config differs from the config file");
    if (!b.eci) throw ConfigError("--resume: checkpoint has no classification head");
    model = std::move(b.model);
    head = std::move(*b.eci);
    state = std::move(b.state);
  } else try {
    Model base = init_model(cfg.model, seed);
    std::shared_ptr<QuantizedModel> qm;
    if (cfg.quantization.enabled)
      qm = std::make_shared<QuantizedModel>(quantize_model(base, cfg.quantization.block_size, cfg.quantization.double_quant));
    model = inject_lora(std::move(base), cfg.lora, seed + 1);
    model.quantized = qm;
    head = init_eci_head(cfg.eci, seed + 2);
  } catch (const ValueError& e) {
    throw ConfigError(e.what());
  }

  const ParameterReport pr = trainable_parameter_report(model, &head);
  std::printf("parameters: trainable %zu, frozen %zu, total %zu\n", pr.trainable_count, pr.frozen_count, pr.total());
  for (const auto& g : pr.groups)
    std::printf("  %-14s %10zu  %s\n", g.name.c_str(), g.count, g.trainable ? "trainable" : "frozen");
  if (model.quantized)
    std::printf("nf4: %zu tensors, %zu -> %zu bytes (ratio %.6f)\n", model.quantized->memory.quantized_tensors,
                model.quantized->memory.float64_bytes, model.quantized->memory.packed_bytes,
                model.quantized->memory.ratio());
  std::fflush(stdout);

  const json extra = {{"method", cfg.method}};
  TrainOptions opts;
  if (args.stop_at) opts.stop_at = args.stop_at;
  opts.checkpoint_every = cfg.checkpoint_every;
  opts.on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(cfg.checkpoint_path + ".step" + std::to_string(s.step), model, &head, s, cfg.training, extra);
  };
  const TrainReport report = train(model, head, examples, cfg.training, state, opts);
  write_text(cfg.loss_csv_path, train_report_csv(report));
  save_checkpoint(cfg.checkpoint_path, model, &head, state, cfg.training, extra);
  if (!report.steps.empty())
    std::printf("steps %zu..%zu, final loss %.17g\n", report.steps.front().step, report.steps.back().step,
                report.steps.back().loss);
  std::printf("checkpoint: %s\nloss csv: %s\n", cfg.checkpoint_path.c_str(), cfg.loss_csv_path.c_str());

  if (cfg.eval_path) {
    auto eval_model = load_eval_model(cfg.checkpoint_path);
    EvalOptions eo;
    eo.mode = cfg.eval_mode;
    eo.prompt = tmpl;
    eo.max_new_tokens = cfg.max_new_tokens;
    eo.workers = cfg.workers;
    const EvalReport er = evaluate(*eval_model, load_benchmark(*cfg.eval_path).records, eo);
    const std::string out = cfg.checkpoint_path + ".eval.json";
    write_text(out, to_json(er).dump(2) + "\n");
    for (const auto& m : er.modes)
      std::printf("eval %s: accuracy %.4f, parse failures %.4f over %zu items\n", mode_name(m.mode).c_str(), m.accuracy,
                  m.parse_failure_rate, m.n_items);
  }
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt, data, mode = "both", out, style = "three_step", exemplars;
  std::size_t shots = 0, max_new_tokens = 32, workers = 1;
};

int cmd_eval(const EvalArgs& args) {
  EvalOptions eo;
  eo.mode = parse_mode(args.mode);
  if (args.style == "three_step") eo.prompt.style = PromptStyle::kThreeStep;
  else if (args.style == "plain") eo.prompt.style = PromptStyle::kPlain;
  else throw ConfigError("--style must be three_step or plain");
  eo.prompt.shots = args.shots;
  eo.prompt.seed = seed_override().value_or(0);
  if (args.shots > 0) {
    if (args.exemplars.empty()) throw ConfigError("--shots requires --exemplars");
    eo.prompt.pool = load_exemplars(args.exemplars);
  }
  eo.max_new_tokens = args.max_new_tokens;
  eo.workers = args.workers;
  auto model = load_eval_model(args.ckpt);
  const LoadedBenchmark data = load_benchmark(args.data);
  EvalReport report = evaluate(*model, data.records, eo);
  report.metadata["dropped_images"] = data.dropped_images;
  report.metadata["benchmark"] = args.data;
  report.metadata["checkpoint"] = args.ckpt;
  const std::string text = to_json(report).dump(2) + "\n";
  if (args.out.empty()) std::cout << text;
  else write_text(args.out, text);
  for (const auto& m : report.modes)
    std::fprintf(stderr, "%s: accuracy %.4f, parse failures %.4f over %zu items\n", mode_name(m.mode).c_str(),
                 m.accuracy, m.parse_failure_rate, m.n_items);
  return kOk;
}

// ---- gradcheck ----

#ifdef ECIWB_WITH_MUTANT
// silu with the sigmoid-derivative term dropped from its backward rule.
Tensor broken_silu(const Tensor& x) {
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.at(i) / (1.0 + std::exp(-x.at(i)));
  Tensor out = Tensor::from(x.shape(), std::move(y));
  record_op("broken_silu", {x}, out, [x](std::span<const double> g) {
    std::vector<double> dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] / (1.0 + std::exp(-x.at(i)));
    accumulate_grad(x, dx);
  });
  return out;
}

void add_mutants(std::vector<OpCheck>& checks) {
  checks.push_back({"mutant_silu", [](std::uint64_t seed, int v) {
                      Rng rng(seed);
                      Tensor x = rng.normal_tensor({static_cast<std::size_t>(2 + v), 3}, 1.0);
                      x.set_requires_grad(true);
                      std::vector<Tensor> in{x};
                      return grad_check([](std::span<const Tensor> t) { return ops::sum(broken_silu(t[0])); }, in);
                    }});
}
#endif

int cmd_gradcheck(std::uint64_t seed, int variants, const std::vector<std::string>& only) {
  auto checks = builtin_op_checks();
#ifdef ECIWB_WITH_MUTANT
  add_mutants(checks);
#endif
  if (!only.empty()) {
    std::erase_if(checks, [&](const OpCheck& c) { return std::find(only.begin(), only.end(), c.name) == only.end(); });
    if (checks.empty()) throw ConfigError("--op matched no registered op");
  }
  const auto outcomes = run_op_checks(checks, seed, variants);
  std::size_t failed = 0;
  std::printf("%-24s %-6s %s\n", "op", "status", "max rel. error per shape");
  for (const auto& o : outcomes) {
    std::printf("%-24s %-6s", o.name.c_str(), o.passed ? "pass" : "FAIL");
    for (double e : o.errors) std::printf(" %.3e", e);
    std::printf("\n");
    if (!o.passed) ++failed;
  }
  std::printf("%zu ops, %zu failed (tolerance %.0e)\n", outcomes.size(), failed, kGradCheckTolerance);
  return failed ? kFailure : kOk;
}

// ---- metrics / report ----

int cmd_metrics(const std::string& cand, const std::string& ref, std::size_t bleu_n, std::size_t rouge_n) {
  const MetricReport r = score_corpus(read_lines(cand), read_lines(ref), bleu_n, rouge_n);
  std::cout << to_json(r).dump(2) << "\n";
  return kOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& md, const std::string& csv) {
  std::vector<EvalReport> reports;
  for (const auto& p : inputs) reports.push_back(eval_report_from_json(read_json(p)));
  const std::string markdown = render_markdown(reports);
  if (!md.empty()) write_text(md, markdown);
  if (!csv.empty()) write_text(csv, render_csv(reports));
  if (md.empty()) std::cout << markdown;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint LoRA + classification-head workbench"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train adapters and the classification head");
  train->add_option("--config", train_args.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", train_args.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-at", train_args.stop_at, "Stop before this step");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a benchmark");
  eval->add_option("--ckpt", eval_args.ckpt)->required();
  eval->add_option("--data", eval_args.data)->required();
  eval->add_option("--mode", eval_args.mode)->check(CLI::IsMember({"freetext", "eci", "both"}));
  eval->add_option("--out", eval_args.out, "Report path (stdout when omitted)");
  eval->add_option("--style", eval_args.style)->check(CLI::IsMember({"three_step", "plain"}));
  eval->add_option("--shots", eval_args.shots)->check(CLI::IsMember({0, 1, 3}));
  eval->add_option("--exemplars", eval_args.exemplars);
  eval->add_option("--max-new-tokens", eval_args.max_new_tokens);
  eval->add_option("--workers", eval_args.workers)->check(CLI::PositiveNumber);

  std::uint64_t gc_seed = 0;
  int gc_variants = kGradCheckVariants;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--variants", gc_variants)->check(CLI::Range(1, 100));
  std::vector<std::string> gc_only;
  gradcheck->add_option("--op", gc_only, "Only run the named ops");

  std::string cand, ref;
  std::size_t bleu_n = 4, rouge_n = 1;
  auto* metrics = app.add_subcommand("metrics", "Corpus BLEU and ROUGE of line-aligned files");
  metrics->add_option("--candidate", cand)->required()->check(CLI::ExistingFile);
  metrics->add_option("--reference", ref)->required()->check(CLI::ExistingFile);
  metrics->add_option("--bleu-n", bleu_n)->check(CLI::PositiveNumber);
  metrics->add_option("--rouge-n", rouge_n)->check(CLI::PositiveNumber);

  std::vector<std::string> report_inputs;
  std::string md_out, csv_out;
  auto* report = app.add_subcommand("report", "Render evaluation reports as a table");
  report->add_option("reports", report_inputs)->required()->check(CLI::ExistingFile);
  report->add_option("--md", md_out);
  report->add_option("--csv", csv_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*gradcheck) return cmd_gradcheck(seed_override().value_or(gc_seed), gc_variants, gc_only);
    if (*metrics) return cmd_metrics(cand, ref, bleu_n, rouge_n);
    if (*report) return cmd_report(report_inputs, md_out, csv_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NanLossError& e) {
    std::fprintf(stderr, "training aborted: %s\n", e.what());
    return kNan;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kFormat;
  } catch (const ValueError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
