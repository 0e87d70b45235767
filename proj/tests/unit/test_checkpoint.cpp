#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "eciwb/checkpoint.hpp"
#include "eciwb/error.hpp"
#include "eciwb/rng.hpp"

using namespace eciwb;
namespace fs = std::filesystem;

namespace {

struct Setup {
  LoraModel model;
  EciHead head;
  std::vector<TrainExample> data;
  TrainConfig config;
};

Setup make_setup(bool quantized = false) {
  ModelConfig mc;
  mc.vocab_size = 24;
  mc.d_model = 16;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.max_seq_len = 10;
  mc.ff_mult = 2;
  Model base = init_model(mc, 3);
  LoraModel lm = inject_lora(base.clone(), std::vector<std::string>{"q_proj", "v_proj"}, 4, 8.0, 4);
  if (quantized) lm.quantized = std::make_shared<QuantizedModel>(quantize_model(base, 32));
  EciConfig ec;
  ec.seq_len = 10;
  ec.d_model = 16;
  ec.max_kernel = 2;
  ec.avg_kernel = 4;
  ec.hidden_widths = {6};
  ec.class_names = {"yes", "no", "maybe"};
  Setup s{std::move(lm), init_eci_head(ec, 5), {}, TrainConfig{}};
  Rng rng(6);
  for (int i = 0; i < 5; ++i) {
    std::vector<std::int64_t> prompt(5);
    for (auto& id : prompt) id = static_cast<std::int64_t>(rng.below(20));
    const std::vector<std::int64_t> answer{20 + i % 3, 23};
    s.data.push_back(make_train_example(prompt, answer, i % 3, 10, 23));
  }
  s.config.lr_start = 5e-3;
  s.config.total_steps = 10;
  s.config.batch_size = 2;
  s.config.seed = 9;
  return s;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * 8) == 0;
}

FormatError::Kind kind_of(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("expected a FormatError");
  return FormatError::Kind::kIo;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("eciwb_test_" + name); }

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("container round trip") {
    Checkpoint c;
    c.metadata = {{"kind", "model"}, {"note", "x"}};
    Rng rng(1);
    c.tensors.push_back({"a", rng.normal_tensor({3, 4}, 1.0)});
    c.tensors.push_back({"s", Tensor::scalar(-0.0)});
    c.quantized.emplace_back("q", quantize_tensor(rng.normal_tensor({5, 7}, 1.0), 8, true));
    const auto bytes = serialize_checkpoint(c);
    CHECK(std::memcmp(bytes.data(), "ECIF", 4) == 0);
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(back.metadata == c.metadata);
    REQUIRE(back.find("a") != nullptr);
    CHECK(same_bits(*back.find("a"), c.tensors[0].tensor));
    CHECK(std::signbit(back.find("s")->item()));
    CHECK(back.find("missing") == nullptr);
    const QuantizedTensor* q = back.find_quantized("q");
    REQUIRE(q != nullptr);
    CHECK(same_bits(dequantize_tensor(*q), dequantize_tensor(c.quantized[0].second)));
    CHECK(serialize_checkpoint(back) == bytes);
  }

  TEST_CASE("distinct format errors") {
    Checkpoint c;
    c.tensors.push_back({"a", Tensor::full({4}, 2.0)});
    const auto good = serialize_checkpoint(c);

    auto bad = good;
    bad[0] = 'X';
    CHECK(kind_of(bad) == FormatError::Kind::kBadMagic);
    bad = good;
    bad[4] = 9;
    CHECK(kind_of(bad) == FormatError::Kind::kVersionMismatch);
    for (std::size_t cut : {std::size_t{6}, std::size_t{10}, good.size() / 2, good.size() - 1}) {
      bad.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK(kind_of(bad) == FormatError::Kind::kTruncated);
    }
    bad = good;
    bad.push_back(0);
    CHECK(kind_of(bad) == FormatError::Kind::kCorrupt);

    try {
      read_checkpoint("/nonexistent/dir/x.ecif");
      FAIL("expected a FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::kIo);
    }
    try {
      deserialize_checkpoint(std::vector<std::uint8_t>{'E', 'C', 'I', 'G', 1, 0, 0, 0});
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("magic") != std::string::npos);
    }
  }

  TEST_CASE("training bundle round trip") {
    for (bool quantized : {false, true}) {
      CAPTURE(quantized);
      Setup s = make_setup(quantized);
      TrainState state;
      TrainOptions opt;
      opt.stop_at = 3;
      train(s.model, s.head, s.data, s.config, state, opt);
      const auto path = temp_file(quantized ? "q.ecif" : "f.ecif");
      save_checkpoint(path.string(), s.model, &s.head, state, s.config, {{"tag", 7}});
      const TrainingBundle b = load_checkpoint(path.string());
      fs::remove(path);

      CHECK(b.state.step == 3);
      CHECK(b.state.adam.step == state.adam.step);
      CHECK(b.state.adam.m == state.adam.m);
      CHECK(b.state.adam.v == state.adam.v);
      CHECK(b.train_config.lambda == s.config.lambda);
      CHECK(b.train_config.seed == s.config.seed);
      CHECK(b.extra["tag"] == 7);
      CHECK(b.model.base.config == s.model.base.config);
      CHECK(static_cast<bool>(b.model.quantized) == quantized);
      REQUIRE(b.eci.has_value());
      CHECK(b.eci->config.class_names == s.head.config.class_names);

      const auto pa = b.model.adapter_parameters(), pb = s.model.adapter_parameters();
      REQUIRE(pa.size() == pb.size());
      for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(same_bits(pa[i].tensor, pb[i].tensor));
        CHECK(pa[i].tensor.requires_grad());
      }
      const auto ea = b.eci->named_parameters(), eb = s.head.named_parameters();
      for (std::size_t i = 0; i < ea.size(); ++i) CHECK(same_bits(ea[i].tensor, eb[i].tensor));
      const auto ba = b.model.effective_base().named_parameters(), bb = s.model.effective_base().named_parameters();
      for (std::size_t i = 0; i < ba.size(); ++i) CHECK(same_bits(ba[i].tensor, bb[i].tensor));
      if (quantized) CHECK(b.model.quantized->memory.packed_bytes == s.model.quantized->memory.packed_bytes);
    }
  }

  TEST_CASE("resume from a saved checkpoint reproduces the trajectory") {
    Setup ref = make_setup();
    TrainState ref_state;
    const TrainReport full = train(ref.model, ref.head, ref.data, ref.config, ref_state);

    Setup s = make_setup();
    TrainState state;
    TrainOptions opt;
    opt.stop_at = 4;
    train(s.model, s.head, s.data, s.config, state, opt);
    const auto bytes = serialize_checkpoint(make_checkpoint(s.model, &s.head, state, s.config));
    TrainingBundle b = bundle_from_checkpoint(deserialize_checkpoint(bytes));
    const TrainReport rest = train(b.model, *b.eci, s.data, b.train_config, b.state);
    REQUIRE(rest.steps.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(rest.steps[i].loss == full.steps[4 + i].loss);
      CHECK(rest.steps[i].lr == full.steps[4 + i].lr);
    }
    const auto pa = b.model.adapter_parameters(), pb = ref.model.adapter_parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_bits(pa[i].tensor, pb[i].tensor));
  }

  TEST_CASE("metadata problems are format errors") {
    Setup s = make_setup();
    Checkpoint c = make_checkpoint(s.model, &s.head, TrainState{}, s.config);
    c.metadata["model"]["d_model"] = "wide";
    CHECK_THROWS_AS(bundle_from_checkpoint(c), FormatError);
    Checkpoint d = make_checkpoint(s.model, &s.head, TrainState{}, s.config);
    d.tensors.pop_back();
    CHECK_THROWS_AS(bundle_from_checkpoint(d), FormatError);
  }
}
