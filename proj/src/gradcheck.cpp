// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "eciwb/eci.hpp"
#include "eciwb/error.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/training.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

GradCheckResult grad_check_detailed(const ScalarFn& f, std::span<Tensor> inputs, double eps) {
  for (auto& t : inputs) t.clear_grad();
  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f(inputs);
    if (out.numel() != 1) throw ShapeError("grad_check: function must return a scalar, got " + shape_str(out.shape()));
    tape.backward(out);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    if (inputs[i].has_grad())
      analytic[i].assign(inputs[i].grad().begin(), inputs[i].grad().end());
    else
      analytic[i].assign(inputs[i].numel(), 0.0);
    inputs[i].clear_grad();
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto values = inputs[i].mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + eps;
      const double plus = f(inputs).item();
      values[k] = saved - eps;
      const double minus = f(inputs).item();
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i][k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (!(err <= result.max_rel_error)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_input = i;
        result.worst_index = k;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

namespace {

Tensor leaf(Rng& rng, Shape shape, double sd = 1.0) {
  Tensor t = rng.normal_tensor(std::move(shape), sd);
  t.set_requires_grad(true);
  return t;
}

// Random fixed projection of an arbitrary output down to a scalar.
Tensor project(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed ^ 0x5bd1e995ULL);
  Tensor r = rng.normal_tensor(out.shape(), 1.0);
  return ops::sum(ops::mul(out, r));
}

std::vector<std::int64_t> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::int64_t> ids(n);
  for (auto& id : ids) id = static_cast<std::int64_t>(rng.below(vocab));
  return ids;
}

double check(const ScalarFn& f, std::vector<Tensor> inputs) { return grad_check(f, inputs); }

// Three small shapes per variant index.
std::size_t pick(int variant, std::size_t a, std::size_t b, std::size_t c) {
  return variant % 3 == 0 ? a : (variant % 3 == 1 ? b : c);
}

std::vector<OpCheck> make_checks() {
  std::vector<OpCheck> checks;
  auto add = [&](std::string name, std::function<double(std::uint64_t, int)> run) {
    checks.push_back({std::move(name), std::move(run)});
  };

  add("matmul", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t m = pick(v, 2, 3, 4), k = pick(v, 3, 5, 2), n = pick(v, 4, 2, 3);
    if (v % 3 == 2) {
      // Batched with a shared right operand.
      return check([=](std::span<const Tensor> x) { return project(ops::matmul(x[0], x[1]), seed); },
                   {leaf(rng, {2, m, k}), leaf(rng, {k, n})});
    }
    return check([=](std::span<const Tensor> x) { return project(ops::matmul(x[0], x[1]), seed); },
                 {leaf(rng, {m, k}), leaf(rng, {k, n})});
  });
  add("linear", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t in = pick(v, 3, 4, 6), out = pick(v, 2, 5, 3);
    Shape xs = v == 2 ? Shape{2, 3, in} : Shape{pick(v, 2, 3, 0), in};
    return check([=](std::span<const Tensor> x) { return project(ops::linear(x[0], x[1]), seed); },
                 {leaf(rng, xs), leaf(rng, {out, in})});
  });
  add("add", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    Shape s = v == 0 ? Shape{5} : (v == 1 ? Shape{2, 3} : Shape{2, 2, 3});
    return check([=](std::span<const Tensor> x) { return project(ops::add(x[0], x[1]), seed); },
                 {leaf(rng, s), leaf(rng, s)});
  });
  add("add_broadcast", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t d = pick(v, 2, 3, 4);
    return check([=](std::span<const Tensor> x) { return project(ops::add(x[0], x[1]), seed); },
                 {leaf(rng, {pick(v, 3, 2, 2), d}), leaf(rng, {d})});
  });
  add("mul", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    Shape s = v == 0 ? Shape{4} : (v == 1 ? Shape{3, 2} : Shape{2, 3, 2});
    Shape t = v == 2 ? Shape{2} : s;
    return check([=](std::span<const Tensor> x) { return project(ops::mul(x[0], x[1]), seed); },
                 {leaf(rng, s), leaf(rng, t)});
  });
  add("scale", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const double alpha = pick(v, 1, 2, 3) * 0.7 - 1.5;
    return check([=](std::span<const Tensor> x) { return project(ops::scale(x[0], alpha), seed); },
                 {leaf(rng, {pick(v, 3, 2, 4), 2})});
  });
  add("reshape_flatten", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t a = pick(v, 2, 3, 4), b = pick(v, 3, 2, 2);
    return check(
        [=](std::span<const Tensor> x) {
          Tensor r = ops::reshape(x[0], {b, a, 2});
          return project(ops::flatten(r, 1), seed);
        },
        {leaf(rng, {a, b, 2})});
  });
  add("transpose", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t a0 = v == 2 ? 0 : 1;
    return check([=](std::span<const Tensor> x) { return project(ops::transpose(x[0], a0, 2), seed); },
                 {leaf(rng, {2, pick(v, 3, 2, 4), pick(v, 2, 4, 3)})});
  });
  add("embedding", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t vocab = pick(v, 5, 7, 4), d = pick(v, 3, 2, 4);
    const Shape ids_shape{2, pick(v, 3, 4, 5)};
    auto ids = random_ids(rng, shape_numel(ids_shape), vocab);
    return check([=](std::span<const Tensor> x) { return project(ops::embedding(x[0], ids, ids_shape), seed); },
                 {leaf(rng, {vocab, d})});
  });
  add("silu", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    return check([=](std::span<const Tensor> x) { return project(ops::silu(x[0]), seed); },
                 {leaf(rng, {pick(v, 4, 2, 3), pick(v, 1, 3, 5)}, 2.0)});
  });
  add("sum", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    return check([](std::span<const Tensor> x) { return ops::sum(ops::mul(x[0], x[0])); },
                 {leaf(rng, {pick(v, 3, 2, 4), pick(v, 1, 3, 2)})});
  });
  add("mean", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    return check([](std::span<const Tensor> x) { return ops::mean(ops::mul(x[0], x[0])); },
                 {leaf(rng, {pick(v, 3, 2, 4), pick(v, 1, 3, 2)})});
  });
  add("softmax", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t axis = v == 1 ? 0 : 1;
    return check([=](std::span<const Tensor> x) { return project(ops::softmax(x[0], axis), seed); },
                 {leaf(rng, {pick(v, 2, 3, 4), pick(v, 4, 3, 5)}, 2.0)});
  });
  add("cross_entropy", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t rows = pick(v, 3, 4, 6), c = pick(v, 3, 5, 4);
    auto targets = random_ids(rng, rows, c);
    std::optional<std::int64_t> ignore;
    auto red = v == 1 ? ops::Reduction::kSum : ops::Reduction::kMean;
    if (v == 2) {
      targets[1] = kIgnoreIndex;
      ignore = kIgnoreIndex;
    }
    return check([=](std::span<const Tensor> x) { return ops::cross_entropy(x[0], targets, ignore, red); },
                 {leaf(rng, {rows, c}, 2.0)});
  });
  add("max_pool_1d", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t axis = v == 1 ? 2 : 1, kernel = pick(v, 2, 3, 2), stride = pick(v, 2, 3, 1);
    return check([=](std::span<const Tensor> x) { return project(ops::max_pool_1d(x[0], axis, kernel, stride), seed); },
                 {leaf(rng, {2, pick(v, 6, 3, 5), pick(v, 3, 7, 2)})});
  });
  add("avg_pool_1d", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t axis = v == 1 ? 1 : 2, kernel = pick(v, 2, 3, 4), stride = pick(v, 2, 3, 1);
    return check([=](std::span<const Tensor> x) { return project(ops::avg_pool_1d(x[0], axis, kernel, stride), seed); },
                 {leaf(rng, {2, pick(v, 3, 7, 2), pick(v, 6, 3, 5)})});
  });
  add("rms_norm", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t d = pick(v, 4, 3, 6);
    Tensor w = leaf(rng, {d}, 0.5);
    for (double& x : w.mutable_data()) x += 1.0;
    return check([=](std::span<const Tensor> x) { return project(ops::rms_norm(x[0], x[1], 1e-6), seed); },
                 {leaf(rng, {pick(v, 2, 3, 2), d}), w});
  });
  add("causal_mask_softmax", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t s = pick(v, 3, 4, 5);
    return check([=](std::span<const Tensor> x) { return project(ops::softmax(ops::causal_mask(x[0]), 2), seed); },
                 {leaf(rng, {2, s, s})});
  });
  add("mask_positions", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t b = 2, s = pick(v, 3, 4, 2);
    std::vector<std::uint8_t> keep(b * s);
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = (i + static_cast<std::size_t>(v)) % 3 != 0;
    return check([=](std::span<const Tensor> x) { return project(ops::mask_positions(x[0], keep), seed); },
                 {leaf(rng, {b, s, 3})});
  });
  add("lora_forward", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t in = pick(v, 4, 6, 5), out = pick(v, 3, 6, 4), r = pick(v, 2, 1, 3);
    Tensor w0 = rng.normal_tensor({out, in}, 1.0);
    const double scale = 16.0 / static_cast<double>(r);
    return check(
        [=](std::span<const Tensor> x) { return project(lora_forward(w0, x[0], x[1], scale, x[2]), seed); },
        {leaf(rng, {r, in}, 0.5), leaf(rng, {out, r}, 0.5), leaf(rng, {2, 3, in})});
  });
  add("eci_forward", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    EciConfig cfg;
    cfg.seq_len = pick(v, 10, 6, 8);
    cfg.d_model = pick(v, 8, 6, 4);
    cfg.max_kernel = pick(v, 5, 3, 2);
    cfg.avg_kernel = pick(v, 4, 2, 2);
    if (v == 2) {
      cfg.max_axis = PoolAxis::kEmbedding;
      cfg.avg_axis = PoolAxis::kSequence;
    }
    cfg.hidden_widths = {pick(v, 5, 4, 3), 3};
    cfg.class_names = {"a", "b", "c"};
    EciHead head = init_eci_head(cfg, seed);
    const std::size_t b = 3;
    auto targets = random_ids(rng, b, 3);
    std::vector<Tensor> inputs{leaf(rng, {b, cfg.seq_len, cfg.d_model})};
    for (std::size_t i = 0; i < head.weights.size(); ++i) {
      inputs.push_back(head.weights[i]);
      for (double& x : head.biases[i].mutable_data()) x = rng.normal(0.0, 0.1);
      inputs.push_back(head.biases[i]);
    }
    return check(
        [=](std::span<const Tensor> x) {
          EciHead h;
          h.config = cfg;
          for (std::size_t i = 1; i + 1 < x.size(); i += 2) {
            h.weights.push_back(x[i]);
            h.biases.push_back(x[i + 1]);
          }
          return ops::cross_entropy(eci_forward(h, x[0]).logits, targets);
        },
        inputs);
  });
  add("joint_loss", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    const std::size_t b = 2, s = pick(v, 3, 4, 2), vocab = pick(v, 5, 4, 6), c = 3;
    auto tg = random_ids(rng, b * s, vocab);
    tg[0] = kIgnoreIndex;
    auto cls = random_ids(rng, b, c);
    const double lambda = 0.25 * (v + 1);
    auto red = v == 1 ? ops::Reduction::kSum : ops::Reduction::kMean;
    return check(
        [=](std::span<const Tensor> x) { return joint_loss(x[0], tg, x[1], cls, lambda, red).total; },
        {leaf(rng, {b, s, vocab}), leaf(rng, {b, c})});
  });
  add("transformer_forward", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    ModelConfig mc;
    mc.vocab_size = 11;
    mc.d_model = 16;
    mc.n_heads = pick(v, 2, 4, 8);
    mc.n_layers = 2;
    mc.max_seq_len = 6;
    mc.ff_mult = 2;
    Model model = init_model(mc, seed);
    // Larger weights keep most gradients well above finite-difference noise.
    for (auto& p : model.named_parameters())
      for (double& x : p.tensor.mutable_data()) x *= 4.0;
    const std::size_t s = pick(v, 3, 4, 5);
    TokenBatch tokens{random_ids(rng, 2 * s, mc.vocab_size), 2, s};
    std::vector<std::int64_t> targets = random_ids(rng, 2 * s, mc.vocab_size);
    DecoderLayer& l0 = model.layers[0];
    DecoderLayer& l1 = model.layers[1];
    std::vector<Tensor> inputs{model.tok_emb, model.pos_emb, l0.wq, l0.wk, l1.wv,
                               l1.wo,         l0.w_up,       l1.w_down, l0.attn_norm, model.lm_head};
    for (auto& t : inputs) t.set_requires_grad(true);
    return check(
        [=](std::span<const Tensor>) {
          return ops::cross_entropy(forward(model, tokens).logits, targets);
        },
        inputs);
  });
  add("lora_transformer", [](std::uint64_t seed, int v) {
    Rng rng(seed);
    ModelConfig mc;
    mc.vocab_size = 9;
    mc.d_model = 8;
    mc.n_heads = 2;
    mc.n_layers = 1;
    mc.max_seq_len = 5;
    mc.ff_mult = 2;
    std::vector<std::string> targets = v == 2 ? std::vector<std::string>{"k_proj", "o_proj"}
                                              : std::vector<std::string>{"q_proj", "v_proj"};
    Model base = init_model(mc, seed);
    for (auto& p : base.named_parameters())
      for (double& x : p.tensor.mutable_data()) x *= 4.0;
    LoraModel lm = inject_lora(std::move(base), targets, pick(v, 2, 4, 3), 8.0, seed + 1);
    std::vector<Tensor> inputs;
    for (auto& p : lm.adapter_parameters()) {
      for (double& x : p.tensor.mutable_data()) x = rng.normal(0.0, 0.2);
      inputs.push_back(p.tensor);
    }
    const std::size_t s = pick(v, 3, 5, 4);
    TokenBatch tokens{random_ids(rng, s, mc.vocab_size), 1, s};
    std::vector<std::int64_t> tgt = random_ids(rng, s, mc.vocab_size);
    return check([=](std::span<const Tensor>) { return ops::cross_entropy(forward(lm, tokens).logits, tgt); },
                 inputs);
  });
  return checks;
}

}  // namespace

std::vector<OpCheck> builtin_op_checks() { return make_checks(); }

std::vector<OpCheckOutcome> run_op_checks(const std::vector<OpCheck>& checks, std::uint64_t seed, int variants,
                                          double tolerance) {
  std::vector<OpCheckOutcome> outcomes;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    OpCheckOutcome o;
    o.name = checks[i].name;
    for (int v = 0; v < variants; ++v) {
      double err;
      try {
        err = checks[i].run(seed + 1000 * i + static_cast<std::uint64_t>(v), v);
      } catch (const Error&) {
        err = INFINITY;
      }
      o.errors.push_back(err);
      o.worst = std::max(o.worst, err);
    }
    o.passed = o.worst < tolerance;
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

}  // namespace eciwb
