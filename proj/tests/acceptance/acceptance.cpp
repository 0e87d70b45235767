// One PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eciwb/checkpoint.hpp"
#include "eciwb/eci.hpp"
#include "eciwb/evaluation.hpp"
#include "eciwb/gradcheck.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/metrics.hpp"
#include "eciwb/prompts.hpp"
#include "eciwb/quantization.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/tokenizer.hpp"
#include "eciwb/training.hpp"

using namespace eciwb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

ModelConfig desk_model(std::size_t max_seq) {
  ModelConfig c;
  c.vocab_size = kVocabSize;
  c.d_model = 64;
  c.n_layers = 2;
  c.n_heads = 8;
  c.max_seq_len = max_seq;
  return c;
}

EciConfig desk_eci(std::size_t seq, std::vector<std::string> classes) {
  EciConfig c;
  c.seq_len = seq;
  c.d_model = 64;
  c.class_names = std::move(classes);
  return c;
}

// Random byte prompts with a class-dependent answer, for runs that only
// exercise the training machinery.
std::vector<TrainExample> random_examples(std::size_t n, std::size_t seq, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int64_t> prompt(seq / 2 + rng.below(seq / 4));
    for (auto& id : prompt) id = static_cast<std::int64_t>(rng.below(256));
    const std::int64_t cls = static_cast<std::int64_t>(i % 3);
    auto answer = encode(answer_line(std::string(1, static_cast<char>('A' + cls))));
    answer.push_back(kEosId);
    out.push_back(make_train_example(prompt, answer, cls, seq, kPadId));
  }
  return out;
}

struct Run {
  LoraModel model;
  EciHead head;
  TrainConfig config;
  std::vector<TrainExample> data;
};

Run small_run(std::size_t steps, std::uint64_t seed) {
  const std::size_t seq = 32;
  Run r{inject_lora(init_model(desk_model(seq), seed), LoraConfig{}, seed + 1),
        init_eci_head(desk_eci(seq, {"A", "B", "C"}), seed + 2), TrainConfig{}, random_examples(12, seq, seed + 3)};
  r.config.lr_start = 1e-3;
  r.config.total_steps = steps;
  r.config.batch_size = 4;
  r.config.seed = seed;
  return r;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto checks = builtin_op_checks();
  const auto results = run_op_checks(checks, 20240601);
  const double elapsed = seconds_since(t0);
  std::size_t passed = 0;
  double worst = 0.0;
  bool has_eci = false, has_joint = false;
  for (const auto& r : results) {
    if (r.passed && r.errors.size() >= 3) ++passed;
    worst = std::max(worst, r.worst);
    has_eci = has_eci || r.name == "eci_forward";
    has_joint = has_joint || r.name == "joint_loss";
  }
  Outcome o;
  o.pass = passed == results.size() && has_eci && has_joint && elapsed < 60.0;
  o.detail = std::to_string(passed) + "/" + std::to_string(results.size()) + " ops pass on 3 shapes, worst " +
             fmt("%.2e", worst) + ", " + fmt("%.1f s", elapsed);
  return o;
}

Outcome identity_and_freeze() {
  Run r = small_run(200, 11);
  const Model base = r.model.base.clone();
  std::vector<std::int64_t> ids(2 * 32);
  Rng rng(5);
  for (auto& id : ids) id = static_cast<std::int64_t>(rng.below(256));
  const bool identical =
      same_bits(forward(base, TokenBatch{ids, 2, 32}).logits, forward(r.model, TokenBatch{ids, 2, 32}).logits);

  std::vector<Tensor> before;
  for (const auto& p : trainable_parameters(r.model, r.head)) before.push_back(p.tensor.clone());
  TrainState state;
  train(r.model, r.head, r.data, r.config, state);

  std::size_t frozen_changed = 0, frozen_total = 0;
  const auto now = r.model.base.named_parameters(), then = base.named_parameters();
  for (std::size_t i = 0; i < now.size(); ++i, ++frozen_total)
    if (!same_bits(now[i].tensor, then[i].tensor)) ++frozen_changed;
  std::size_t trained_same = 0;
  const auto trained = trainable_parameters(r.model, r.head);
  for (std::size_t i = 0; i < trained.size(); ++i)
    if (same_bits(trained[i].tensor, before[i])) ++trained_same;

  Outcome o;
  o.pass = identical && frozen_changed == 0 && trained_same == 0 && state.step == 200;
  o.detail = std::string("step-0 logits ") + (identical ? "identical" : "differ") + "; after " +
             std::to_string(state.step) + " steps " + std::to_string(frozen_changed) + "/" +
             std::to_string(frozen_total) + " frozen tensors changed, " +
             std::to_string(trained.size() - trained_same) + "/" + std::to_string(trained.size()) +
             " A/B/ECI tensors changed";
  return o;
}

Outcome merge_equivalence() {
  LoraModel m = inject_lora(init_model(desk_model(64), 21), LoraConfig{}, 22);
  Rng rng(23);
  for (auto& [key, ad] : m.adapters)
    for (double& x : ad.b.mutable_data()) x = rng.normal(0.0, 0.05);
  std::vector<std::vector<std::int64_t>> seqs;
  std::vector<Tensor> unmerged;
  for (int i = 0; i < 16; ++i) {
    std::vector<std::int64_t> ids(8 + rng.below(57));
    for (auto& id : ids) id = static_cast<std::int64_t>(rng.below(kVocabSize));
    unmerged.push_back(forward(m, TokenBatch{ids, 1, ids.size()}).logits);
    seqs.push_back(std::move(ids));
  }
  const Model merged = merge_adapters(m);
  double worst = 0.0;
  for (int i = 0; i < 16; ++i) {
    const Tensor l = forward(merged, TokenBatch{seqs[i], 1, seqs[i].size()}).logits;
    for (std::size_t j = 0; j < l.numel(); ++j) worst = std::max(worst, std::fabs(l.at(j) - unmerged[i].at(j)));
  }
  return {worst <= 1e-9, "max |merged - unmerged| over 16 sequences = " + fmt("%.3e", worst)};
}

Outcome lambda_boundaries() {
  Run r = small_run(6, 31);
  const TrainExample* ptrs[] = {&r.data[0], &r.data[1], &r.data[2], &r.data[3]};
  const TrainBatch batch = collate(ptrs);
  const ForwardOutput text = forward(r.model, TokenBatch{batch.token_ids, batch.batch, batch.seq});
  const ForwardOutput prompt = forward(r.model, TokenBatch{batch.eci_token_ids, batch.batch, batch.seq});
  const Tensor eci = eci_forward(r.head, prompt.last_hidden, batch.eci_keep).logits;

  bool mixing = true;
  double a = 0.0, b = 0.0;
  for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const JointLoss l = joint_loss(text.logits, batch.textgen_targets, eci, batch.class_targets, lambda);
    a = l.textgen.item();
    b = l.eci.item();
    mixing = mixing && l.total.item() == (1.0 - lambda) * a + lambda * b;
  }
  bool runs = true;
  for (double lambda : {0.0, 1.0}) {
    Run run = small_run(6, 31);
    run.config.lambda = lambda;
    TrainState st;
    for (const auto& s : train(run.model, run.head, run.data, run.config, st).steps)
      runs = runs && s.loss == (lambda == 0.0 ? s.l_textgen : s.l_eci);
  }
  return {mixing && runs, std::string("(1-l)a + l*b exact for l in {0,.25,.5,.75,1}: ") + (mixing ? "yes" : "no") +
                              "; l=0 and l=1 runs equal their component losses: " + (runs ? "yes" : "no")};
}

// 32 short multiple-choice items whose answer follows from a keyword.
std::vector<BenchmarkRecord> synthetic_mcq() {
  const char* organs[3][4] = {{"kidney", "nephron", "renal tubule", "glomerulus"},
                              {"heart", "aortic valve", "ventricle", "coronary"},
                              {"lung", "alveolus", "bronchus", "pleura"}};
  std::vector<BenchmarkRecord> out;
  for (std::size_t i = 0; i < 32; ++i) {
    BenchmarkRecord r;
    r.id = "syn" + std::to_string(i);
    const std::size_t cls = (i * 7 + i / 3) % 3;
    r.question = std::string("Case ") + std::to_string(i) + ": lesion of the " + organs[cls][(i / 3) % 4] + "?";
    r.options = {{"A", "renal"}, {"B", "cardiac"}, {"C", "pulmonary"}};
    r.gold = std::string(1, static_cast<char>('A' + cls));
    out.push_back(std::move(r));
  }
  return out;
}

Outcome overfit() {
  const auto t0 = Clock::now();
  const std::size_t seq = 128;
  std::vector<TrainExample> data;
  std::size_t counts[3] = {0, 0, 0};
  std::size_t longest = 0;
  for (const auto& r : synthetic_mcq()) {
    const auto prompt = encode(build_plain_prompt(r));
    longest = std::max(longest, prompt.size());
    auto answer = encode(answer_line(r.gold));
    answer.push_back(kEosId);
    const std::int64_t cls = r.gold[0] - 'A';
    ++counts[cls];
    data.push_back(make_train_example(prompt, answer, cls, seq, kPadId));
  }
  LoraModel model = inject_lora(init_model(desk_model(seq), 41), LoraConfig{}, 42);
  EciHead head = init_eci_head(desk_eci(seq, {"A", "B", "C"}), 43);
  TrainConfig cfg;
  cfg.lr_start = 2e-3;
  cfg.total_steps = 500;
  cfg.batch_size = 8;
  cfg.seed = 44;
  TrainOptions opt;
  opt.eval_every = 10;
  opt.stop_on_perfect_accuracy = true;
  TrainState state;
  const TrainReport rep = train(model, head, data, cfg, state, opt);
  const double elapsed = seconds_since(t0);

  // Same seed again, compared step by step up to the same point.
  LoraModel model2 = inject_lora(init_model(desk_model(seq), 41), LoraConfig{}, 42);
  EciHead head2 = init_eci_head(desk_eci(seq, {"A", "B", "C"}), 43);
  TrainState state2;
  TrainOptions opt2;
  opt2.stop_at = std::min<std::size_t>(state.step, 20);
  const TrainReport rep2 = train(model2, head2, data, cfg, state2, opt2);
  bool deterministic = true;
  for (std::size_t i = 0; i < rep2.steps.size(); ++i) deterministic = deterministic && rep2.steps[i].loss == rep.steps[i].loss;

  Outcome o;
  o.pass = rep.final_train_accuracy == 1.0 && state.step <= 500 && deterministic && elapsed < 300.0;
  o.detail = "train accuracy " + fmt("%.4f", rep.final_train_accuracy) + " after " + std::to_string(state.step) +
             " steps (classes " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
             std::to_string(counts[2]) + ", longest prompt " + std::to_string(longest) + " tokens), " +
             (deterministic ? "repeatable" : "NOT repeatable") + ", " + fmt("%.1f s", elapsed);
  return o;
}

Outcome figure_contrast() {
  const std::vector<std::string> ynm{"yes", "no", "maybe"};
  std::vector<BenchmarkRecord> records;
  ScriptedConfig script;
  script.class_names = ynm;
  for (std::size_t i = 0; i < 200; ++i) {
    BenchmarkRecord r;
    r.id = "f" + std::to_string(i);
    r.question = "Item " + std::to_string(i) + "?";
    for (const auto& l : ynm) r.options.emplace_back(l, l);
    r.gold = ynm[i % 3];
    if (i % 10 < 3) {
      script.responses[r.id] = i % 2 ? "I am not able to provide a medical opinion on this question."
                                   : "Several factors are involved and further research is required.";
    } else {
      script.responses[r.id] = "Considering the evidence, the answer is " + r.gold + ".";
    }
    records.push_back(std::move(r));
  }
  EvalOptions opt;
  opt.mode = EvalMode::kBoth;
  const EvalReport rep = evaluate(*make_scripted_model(script), records, opt);
  const double text_fail = rep.modes.at(0).parse_failure_rate;
  const double eci_fail = rep.modes.at(1).parse_failure_rate;
  return {text_fail == 0.30 && eci_fail == 0.0,
          "free-text parse failures " + fmt("%.4f", text_fail) + ", ECI parse failures " + fmt("%.4f", eci_fail) +
              " over " + std::to_string(records.size()) + " items"};
}

Outcome metrics_oracle() {
  const std::vector<TokenSequence> cat{tokenize("the cat is on the mat")};
  const Ratio r = modified_precision(tokenize("the the the the the the the"), cat, 1);
  const auto same = tokenize("the quick brown fox jumps over the lazy dog");
  const std::vector<TokenSequence> same_ref{same};
  const double b = bleu(same, same_ref).bleu;
  const double rg = rouge_n(same, same_ref, 1).recall;

  std::ifstream in(std::string(ECIWB_FIXTURES) + "/bleu_corpus.json");
  const auto fx = nlohmann::json::parse(in);
  std::vector<TokenSequence> cands;
  std::vector<std::vector<TokenSequence>> refs;
  for (const auto& p : fx["pairs"]) {
    cands.push_back(tokenize(p["candidate"].get<std::string>()));
    refs.push_back({tokenize(p["reference"].get<std::string>())});
  }
  const double d_bleu = std::fabs(corpus_bleu(cands, refs).bleu - fx["corpus_bleu4"].get<double>());
  const double d_rouge = std::fabs(corpus_rouge_n(cands, refs, 1).recall - fx["corpus_rouge1_recall"].get<double>());
  const bool ok = r.numerator == 2 && r.denominator == 7 && b == 1.0 && rg == 1.0 && d_bleu < 1e-9 && d_rouge < 1e-9;
  return {ok, "clipped precision " + std::to_string(r.numerator) + "/" + std::to_string(r.denominator) +
                  ", identity BLEU-4 " + fmt("%.4f", b) + " ROUGE-1 " + fmt("%.4f", rg) + ", fixture diffs " +
                  fmt("%.1e", d_bleu) + " / " + fmt("%.1e", d_rouge)};
}

Outcome eci_accounting() {
  const std::vector<std::size_t> widths{256, 64};
  const std::size_t unpooled = eci_param_count(1900, 5120, 1, 1, widths, 3).flatten_width;
  const std::size_t pooled = eci_param_count(1900, 5120, 5, 8, widths, 3).flatten_width;
  bool tallies = true;
  for (std::size_t s : {32, 128})
    for (std::size_t classes : {2, 3, 5}) {
      std::vector<std::string> names;
      for (std::size_t i = 0; i < classes; ++i) names.push_back("c" + std::to_string(i));
      const EciConfig cfg = desk_eci(s, names);
      const EciHead head = init_eci_head(cfg, 1);
      std::size_t allocated = 0;
      for (const auto& p : head.named_parameters()) allocated += p.tensor.numel();
      tallies = tallies && allocated == eci_param_count(cfg).total;
    }
  return {unpooled == 9728000 && pooled == 243200 && tallies,
          "flatten width " + std::to_string(unpooled) + " (N=K=1), " + std::to_string(pooled) +
              " (N=5, K=8); allocated tallies " + (tallies ? "match" : "differ")};
}

Outcome nf4_round_trip() {
  const double half_gap = nf4_max_gap() / 2.0;
  Rng rng(51);
  const std::size_t blocks = 100000, block = 64;
  std::vector<double> x(blocks * block);
  for (std::size_t b = 0; b < blocks; ++b) {
    const double sd = std::exp(rng.uniform(-6.0, 3.0));
    for (std::size_t i = 0; i < block; ++i) x[b * block + i] = rng.normal(0.0, sd);
  }
  const auto q = nf4_quantize(x, block);
  const auto y = nf4_dequantize(q);
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double bound = q[i / block].absmax * half_gap;
    worst_ratio = std::max(worst_ratio, std::fabs(x[i] - y[i]) / bound);
  }

  const Model m = init_model(desk_model(128), 52);
  const QuantizedModel qm = quantize_model(m, block);
  std::size_t elems = 0;
  for (const auto& p : m.named_parameters())
    if (p.tensor.rank() == 2) elems += p.tensor.numel();
  const std::size_t expected_bytes = elems / 2 + (elems + block - 1) / block * sizeof(double);
  const bool bytes_ok = qm.memory.packed_bytes == expected_bytes && qm.memory.float64_bytes == elems * 8 &&
                        qm.memory.ratio() == (0.5 + 8.0 / block) / 8.0;
  return {worst_ratio <= 1.0 && bytes_ok,
          "worst error / bound = " + fmt("%.6f", worst_ratio) + " over 1e5 blocks; memory ratio " +
              fmt("%.6f", qm.memory.ratio()) + " vs formula " + fmt("%.6f", (0.5 + 8.0 / block) / 8.0)};
}

Outcome determinism_and_persistence() {
  auto run_csv = [](std::size_t steps) {
    Run r = small_run(30, 61);
    TrainState st;
    TrainOptions opt;
    opt.stop_at = steps;
    return train_report_csv(train(r.model, r.head, r.data, r.config, st, opt));
  };
  const std::string csv1 = run_csv(30), csv2 = run_csv(30);
  const bool csv_same = csv1 == csv2;

  Run r = small_run(30, 61);
  TrainState st;
  TrainOptions opt;
  opt.stop_at = 12;
  const TrainReport head_part = train(r.model, r.head, r.data, r.config, st, opt);
  const auto bytes = serialize_checkpoint(make_checkpoint(r.model, &r.head, st, r.config));
  TrainingBundle b = bundle_from_checkpoint(deserialize_checkpoint(bytes));
  const bool round_trip = serialize_checkpoint(make_checkpoint(b.model, &*b.eci, b.state, b.train_config)) == bytes;
  TrainReport resumed = train(b.model, *b.eci, r.data, b.train_config, b.state);
  TrainReport joined = head_part;
  joined.steps.insert(joined.steps.end(), resumed.steps.begin(), resumed.steps.end());
  const bool resume_same = train_report_csv(joined) == csv1;
  return {csv_same && round_trip && resume_same,
          std::string("loss CSVs ") + (csv_same ? "identical" : "differ") + ", checkpoint round trip " +
              (round_trip ? "bitwise" : "NOT bitwise") + ", resume at step 12 " +
              (resume_same ? "matches" : "diverges from") + " the uninterrupted run"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"LoRA identity and freeze", identity_and_freeze},
      {"merge equivalence", merge_equivalence},
      {"lambda boundaries", lambda_boundaries},
      {"overfit oracle", overfit},
      {"free-text vs ECI parse failures", figure_contrast},
      {"metrics oracle", metrics_oracle},
      {"ECI parameter accounting", eci_accounting},
      {"NF4 round trip", nf4_round_trip},
      {"determinism and persistence", determinism_and_persistence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%-4s criterion %2zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
