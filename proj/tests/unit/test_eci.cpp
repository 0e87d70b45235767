#include <doctest.h>

#include "eciwb/eci.hpp"
#include "eciwb/error.hpp"
#include "eciwb/gradcheck.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/rng.hpp"

using namespace eciwb;

namespace {

EciConfig make_config(std::size_t s, std::size_t d, std::vector<std::string> classes) {
  EciConfig c;
  c.seq_len = s;
  c.d_model = d;
  c.class_names = std::move(classes);
  return c;
}

}  // namespace

TEST_SUITE("eci") {
  TEST_CASE("pooled shape") {
    const std::vector<std::size_t> widths{};
    const EciParamCount c = eci_param_count(10, 16, 5, 8, widths, 3);
    CHECK(c.pooled_seq == 2);
    CHECK(c.pooled_emb == 2);
    CHECK(c.flatten_width == 4);
    CHECK(c.total == 4 * 3 + 3);

    const EciHead head = init_eci_head(make_config(10, 16, {"a", "b", "c"}), 1);
    Rng rng(2);
    const EciOutput out = eci_forward(head, rng.normal_tensor({4, 10, 16}, 1.0));
    CHECK(out.logits.shape() == Shape{4, 3});
    CHECK(out.labels.size() == 4);
    CHECK_THROWS_AS(eci_forward(head, rng.normal_tensor({4, 11, 16}, 1.0)), ShapeError);
  }

  TEST_CASE("zero input gives uniform logits and class 0") {
    const EciHead head = init_eci_head(make_config(10, 16, {"yes", "no", "maybe"}), 4);
    const EciOutput out = eci_forward(head, Tensor::zeros({2, 10, 16}));
    for (double x : out.logits.data()) CHECK(x == 0.0);
    CHECK(out.predicted == std::vector<std::size_t>{0, 0});
    CHECK(out.labels == std::vector<std::string>{"yes", "yes"});
  }

  TEST_CASE("parameter counts") {
    const std::vector<std::size_t> widths{256, 64};
    CHECK(eci_param_count(1900, 5120, 1, 1, widths, 3).flatten_width == 9728000);
    const EciParamCount full = eci_param_count(1900, 5120, 5, 8, widths, 3);
    CHECK(full.pooled_seq == 380);
    CHECK(full.pooled_emb == 640);
    CHECK(full.flatten_width == 243200);

    const EciParamCount desk = eci_param_count(128, 64, 5, 8, widths, 3);
    CHECK(desk.flatten_width == 25 * 8);
    CHECK(desk.total == (200 * 256 + 256) + (256 * 64 + 64) + (64 * 3 + 3));

    for (std::size_t classes : {2, 3, 5}) {
      std::vector<std::string> names;
      for (std::size_t i = 0; i < classes; ++i) names.push_back(std::string(1, static_cast<char>('A' + i)));
      const EciConfig cfg = make_config(128, 64, names);
      const EciHead head = init_eci_head(cfg, 0);
      std::size_t allocated = 0;
      for (const auto& p : head.named_parameters()) allocated += p.tensor.numel();
      CHECK(allocated == eci_param_count(cfg).total);
      CHECK(head.parameter_count() == allocated);
      CHECK(head.named_parameters().front().name == "eci.mlp.0.w");
    }

    CHECK_THROWS_AS(eci_param_count(4, 64, 5, 8, widths, 3), ValueError);
    CHECK_THROWS_AS(eci_param_count(128, 64, 5, 8, widths, 0), ValueError);
  }

  TEST_CASE("pooling reduces the flatten width") {
    const std::vector<std::size_t> widths{8};
    for (std::size_t s : {5, 12, 40})
      for (std::size_t d : {8, 16, 24}) {
        const std::size_t full = eci_param_count(s, d, 1, 1, widths, 2).flatten_width;
        const std::size_t pooled = eci_param_count(s, d, 5, 8, widths, 2).flatten_width;
        CHECK(pooled < full);
        CHECK(eci_param_count(s, d, 1, 8, widths, 2).flatten_width < full);
      }
  }

  TEST_CASE("predict_label") {
    const Tensor logits = Tensor::from({1, 3}, {0.1, 2.3, -1.0});
    const std::vector<std::string> names{"A", "B", "C"};
    CHECK(predict_label(logits, names) == std::vector<std::string>{"B"});
    CHECK(predict_indices(Tensor::full({1, 4}, 0.7)) == std::vector<std::size_t>{0});
    Rng rng(5);
    const Tensor five = rng.normal_tensor({5, 3}, 1.0);
    CHECK(predict_label(five, names).size() == 5);
    CHECK_THROWS_AS(predict_label(five, std::vector<std::string>{"A"}), ShapeError);
  }

  TEST_CASE("argmax invariant under a per-row shift") {
    Rng rng(6);
    const Tensor logits = rng.normal_tensor({50, 4}, 2.0);
    Tensor shifted = logits.clone();
    for (std::size_t r = 0; r < 50; ++r) {
      const double c = rng.uniform(-100, 100);
      for (std::size_t j = 0; j < 4; ++j) shifted.mutable_data()[r * 4 + j] += c;
    }
    CHECK(predict_indices(logits) == predict_indices(shifted));
  }

  TEST_CASE("padding mask") {
    EciConfig cfg = make_config(10, 16, {"a", "b"});
    cfg.mask_padding = true;
    const EciHead head = init_eci_head(cfg, 3);
    Rng rng(9);
    Tensor h = rng.normal_tensor({1, 10, 16}, 1.0);
    std::vector<std::uint8_t> keep(10, 1);
    for (std::size_t i = 6; i < 10; ++i) keep[i] = 0;
    const Tensor a = eci_forward(head, h, keep).logits;
    for (std::size_t i = 6 * 16; i < 160; ++i) h.mutable_data()[i] = 50.0;
    const Tensor b = eci_forward(head, h, keep).logits;
    CHECK(a.at(0) == b.at(0));
    CHECK(a.at(1) == b.at(1));
  }

  TEST_CASE("end to end gradient at desk dims") {
    EciConfig cfg = make_config(128, 64, {"A", "B", "C"});
    cfg.hidden_widths = {16};
    const EciHead head = init_eci_head(cfg, 12);
    Rng rng(13);
    std::vector<Tensor> in{rng.normal_tensor({2, 128, 64}, 1.0)};
    in[0].set_requires_grad(true);
    for (auto p : head.named_parameters()) in.push_back(p.tensor);
    const std::vector<std::int64_t> targets{2, 0};
    auto f = [&](std::span<const Tensor> t) {
      EciHead h = head;
      for (std::size_t i = 0; i < h.weights.size(); ++i) {
        h.weights[i] = t[1 + 2 * i];
        h.biases[i] = t[2 + 2 * i];
      }
      return ops::cross_entropy(eci_forward(h, t[0]).logits, targets);
    };
    CHECK(grad_check(f, in) < kGradCheckTolerance);
  }
}
