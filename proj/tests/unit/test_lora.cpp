#include <doctest.h>

#include <cmath>
#include <cstring>

#include "eciwb/eci.hpp"
#include "eciwb/error.hpp"
#include "eciwb/gradcheck.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/rng.hpp"

using namespace eciwb;

namespace {

ModelConfig desk(std::size_t vocab = 40) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.max_seq_len = 16;
  return c;
}

std::vector<std::int64_t> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::int64_t> ids(n);
  for (auto& id : ids) id = static_cast<std::int64_t>(rng.below(vocab));
  return ids;
}

void randomize_b(LoraModel& m, Rng& rng, double sd) {
  for (auto& [key, ad] : m.adapters)
    for (double& x : ad.b.mutable_data()) x = rng.normal(0.0, sd);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::fabs(a.at(i) - b.at(i)));
  return worst;
}

}  // namespace

TEST_SUITE("lora") {
  TEST_CASE("injection shapes and counts") {
    LoraModel m = inject_lora(init_model(desk(), 1), LoraConfig{}, 2);
    CHECK(m.adapters.size() == 4);
    for (const auto& [key, ad] : m.adapters) {
      CHECK(ad.a.shape() == Shape{16, 64});
      CHECK(ad.b.shape() == Shape{64, 16});
      CHECK(ad.a.numel() + ad.b.numel() == 2048);
      CHECK(ad.a.requires_grad());
      CHECK(ad.b.requires_grad());
      for (double x : ad.b.data()) CHECK(x == 0.0);
      CHECK(ad.scale() == 1.0);
    }
    CHECK(m.adapters.begin()->second.name_prefix() == "lora.0.q_proj");
    for (const auto& p : m.base.named_parameters()) CHECK_FALSE(p.tensor.requires_grad());

    // A ~ N(0, 1/r): the sample sd over 4 * 1024 values sits near 0.25.
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& [key, ad] : m.adapters)
      for (double x : ad.a.data()) {
        sq += x * x;
        ++n;
      }
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.25).epsilon(0.05));
  }

  TEST_CASE("injection errors") {
    const std::vector<std::string> bad{"q_proj", "z_proj"};
    CHECK_THROWS_AS(inject_lora(init_model(desk(), 1), bad, 4, 4.0, 0), ValueError);
    const std::vector<std::string> ok{"q_proj"};
    CHECK_THROWS_AS(inject_lora(init_model(desk(), 1), ok, 64, 64.0, 0), ValueError);
    CHECK_THROWS_AS(inject_lora(init_model(desk(), 1), ok, 0, 1.0, 0), ValueError);
    CHECK(inject_lora(init_model(desk(), 1), ok, 63, 63.0, 0).adapters.size() == 2);
  }

  TEST_CASE("zero-init adapters reproduce the base logits exactly") {
    const Model base = init_model(desk(), 4);
    const LoraModel m = inject_lora(base.clone(), LoraConfig{}, 9);
    Rng rng(3);
    const auto ids = random_ids(rng, 2 * 16, 40);
    const Tensor a = forward(base, TokenBatch{ids, 2, 16}).logits;
    const Tensor b = forward(m, TokenBatch{ids, 2, 16}).logits;
    CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0);
  }

  TEST_CASE("lora_forward") {
    Rng rng(7);
    const Tensor x = rng.normal_tensor({3, 6}, 1.0);
    const Tensor w0 = rng.normal_tensor({5, 6}, 1.0);
    const Tensor a = rng.normal_tensor({2, 6}, 1.0);
    const Tensor zb = Tensor::zeros({5, 2});
    const Tensor h0 = lora_forward(w0, a, zb, 1.0, x);
    const Tensor lin = ops::linear(x, w0);
    for (std::size_t i = 0; i < h0.numel(); ++i) CHECK(h0.at(i) == lin.at(i));

    // Zero base: compare against the dense product (B A) applied to x.
    const Tensor b = rng.normal_tensor({5, 2}, 1.0);
    const Tensor h = lora_forward(Tensor::zeros({5, 6}), a, b, 1.0, x);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t o = 0; o < 5; ++o) {
        double dense = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
          double ba = 0.0;
          for (std::size_t k = 0; k < 2; ++k) ba += b.at(o * 2 + k) * a.at(k * 6 + i);
          dense += ba * x.at(r * 6 + i);
        }
        CHECK(std::fabs(h.at(r * 5 + o) - dense) < 1e-12);
      }
    const Tensor h2 = lora_forward(Tensor::zeros({5, 6}), a, b, 0.5, x);
    for (std::size_t i = 0; i < h.numel(); ++i) CHECK(h2.at(i) == doctest::Approx(0.5 * h.at(i)));

    CHECK_THROWS_AS(lora_forward(w0, a, Tensor::zeros({5, 3}), 1.0, x), ShapeError);
  }

  TEST_CASE("lora_forward gradients reach A and B only") {
    Rng rng(11);
    const Tensor w0 = rng.normal_tensor({3, 4}, 1.0);
    const Tensor x = rng.normal_tensor({5, 2, 4}, 1.0);
    const Tensor probe = rng.normal_tensor({5, 2, 3}, 1.0);
    std::vector<Tensor> ab{rng.normal_tensor({3, 4}, 1.0), rng.normal_tensor({3, 3}, 1.0)};
    for (auto& t : ab) t.set_requires_grad(true);
    auto g = [&](std::span<const Tensor> t) {
      return ops::sum(ops::mul(lora_forward(w0, t[0], t[1], 2.0, x), probe));
    };
    CHECK(grad_check(g, ab) < kGradCheckTolerance);
    CHECK_FALSE(w0.has_grad());
    CHECK_FALSE(w0.requires_grad());
  }

  TEST_CASE("merge equivalence") {
    LoraModel m = inject_lora(init_model(desk(), 5), LoraConfig{}, 6);
    Rng rng(8);
    randomize_b(m, rng, 0.1);
    const Model base_copy = m.base.clone();
    std::vector<Tensor> unmerged;
    std::vector<std::vector<std::int64_t>> seqs;
    for (int i = 0; i < 16; ++i) {
      seqs.push_back(random_ids(rng, 16, 40));
      unmerged.push_back(forward(m, TokenBatch{seqs.back(), 1, 16}).logits);
    }
    const Model merged = merge_adapters(m);
    CHECK(m.adapters.empty());
    double worst = 0.0;
    for (int i = 0; i < 16; ++i)
      worst = std::max(worst, max_abs_diff(unmerged[i], forward(merged, TokenBatch{seqs[i], 1, 16}).logits));
    CHECK(worst < 1e-9);
    CHECK(max_abs_diff(merged.layers[0].wq, base_copy.layers[0].wq) > 0.0);
    CHECK(max_abs_diff(merged.layers[0].wk, base_copy.layers[0].wk) == 0.0);
    CHECK_THROWS_AS(merge_adapters(m), ValueError);
  }

  TEST_CASE("merging zero adapters leaves the base weights bitwise") {
    LoraModel m = inject_lora(init_model(desk(), 5), LoraConfig{}, 6);
    const Model base_copy = m.base.clone();
    const Model merged = merge_adapters(m);
    const auto a = merged.named_parameters(), b = base_copy.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(), a[i].tensor.numel() * 8) == 0);
  }

  TEST_CASE("parameter report") {
    Model base = init_model(desk(258), 1);
    base.set_requires_grad(false);
    const ParameterReport plain = trainable_parameter_report(base);
    CHECK(plain.trainable_count == 0);
    CHECK(plain.frozen_count == parameter_count(base.config));

    const LoraModel m = inject_lora(init_model(desk(258), 1), LoraConfig{}, 2);
    EciConfig ec;
    ec.class_names = {"A", "B", "C"};
    ec.seq_len = 128;
    ec.d_model = 64;
    const EciHead head = init_eci_head(ec, 3);
    const ParameterReport r = trainable_parameter_report(m, &head);
    // Flatten 25 * 8 = 200, then 200 -> 256 -> 64 -> 3.
    const std::size_t eci_params = (200 * 256 + 256) + (256 * 64 + 64) + (64 * 3 + 3);
    CHECK(r.trainable_count == 4 * 2048 + eci_params);
    CHECK(r.frozen_count == parameter_count(m.base.config));
    CHECK(r.total() == r.trainable_count + r.frozen_count);
    std::size_t group_sum = 0;
    for (const auto& g : r.groups) group_sum += g.count;
    CHECK(group_sum == r.total());
  }

  TEST_CASE("full-scale flatten width without allocation") {
    const std::vector<std::size_t> widths{256, 64};
    const EciParamCount c = eci_param_count(1900, 5120, 1, 1, widths, 3);
    CHECK(c.flatten_width == 9728000);
    CHECK(c.layers[0].params == 9728000ull * 256 + 256);
  }
}
