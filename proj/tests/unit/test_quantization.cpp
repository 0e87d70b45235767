#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "eciwb/error.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/ops.hpp"
#include "eciwb/quantization.hpp"
#include "eciwb/rng.hpp"
#include "eciwb/training.hpp"

using namespace eciwb;

namespace {

nlohmann::json codebook_fixture() {
  std::ifstream in(std::string(ECIWB_FIXTURES) + "/nf4_codebook.json");
  REQUIRE(in);
  return nlohmann::json::parse(in);
}

std::vector<std::uint8_t> codes_of(const QuantizedBlock& b) { return unpack_codes(b.packed, b.count); }

}  // namespace

TEST_SUITE("quantization") {
  TEST_CASE("codebook against the fixture") {
    const auto& cb = nf4_codebook();
    const auto fx = codebook_fixture();
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::fabs(cb[i] - fx["published"][i].get<double>()) < 2e-7);
      CHECK(std::fabs(cb[i] - fx["derived"][i].get<double>()) < 1e-12);
    }
    for (std::size_t i = 0; i + 1 < 16; ++i) CHECK(cb[i] < cb[i + 1]);
    CHECK(cb.front() == -1.0);
    CHECK(cb.back() == 1.0);
    CHECK(std::count(cb.begin(), cb.end(), 0.0) == 1);
    CHECK(nf4_max_gap() == doctest::Approx(fx["max_gap"].get<double>()).epsilon(1e-9));
  }

  TEST_CASE("nearest code and ties") {
    const auto& cb = nf4_codebook();
    for (std::uint8_t i = 0; i < 16; ++i) CHECK(nf4_nearest_code(cb[i]) == i);
    for (std::uint8_t i = 0; i + 1 < 16; ++i) CHECK(nf4_nearest_code(0.5 * (cb[i] + cb[i + 1])) == i);
  }

  TEST_CASE("packing") {
    std::vector<std::uint8_t> codes{1, 2, 15, 0, 7};
    const auto packed = pack_codes(codes);
    CHECK(packed == std::vector<std::uint8_t>{0x21, 0x0F, 0x07});
    CHECK(unpack_codes(packed, 5) == codes);
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::uint8_t> c(rng.below(40));
      for (auto& x : c) x = static_cast<std::uint8_t>(rng.below(16));
      CHECK(unpack_codes(pack_codes(c), c.size()) == c);
    }
    codes.push_back(16);
    CHECK_THROWS_AS(pack_codes(codes), ValueError);
  }

  TEST_CASE("block examples") {
    const auto zero = nf4_quantize(std::vector<double>(10, 0.0), 64);
    REQUIRE(zero.size() == 1);
    CHECK(zero[0].absmax == 0.0);
    for (auto c : codes_of(zero[0])) CHECK(c == nf4_nearest_code(0.0));
    for (double x : nf4_dequantize(zero)) CHECK(x == 0.0);

    std::vector<double> scaled;
    for (double v : nf4_codebook()) scaled.push_back(v * 2.75);
    const auto q = nf4_quantize(scaled, 16);
    CHECK(nf4_dequantize(q) == scaled);

    const auto one = nf4_quantize(std::vector<double>{3.7}, 64);
    CHECK(one[0].absmax == 3.7);
    CHECK(codes_of(one[0])[0] == 15);
    CHECK(nf4_dequantize(one)[0] == 3.7);

    CHECK_THROWS_AS(nf4_quantize(std::vector<double>{1.0, NAN}, 4), ValueError);
    CHECK_THROWS_AS(nf4_quantize(std::vector<double>{1.0}, 0), ValueError);
  }

  TEST_CASE("round trip bound, sign and idempotence") {
    Rng rng(2);
    const double half_gap = nf4_max_gap() / 2.0;
    std::vector<double> x(64 * 200 + 17);
    for (auto& v : x) v = rng.normal(0.0, rng.uniform(0.01, 3.0));
    const auto q = nf4_quantize(x, 64);
    CHECK(q.size() == 201);
    const auto y = nf4_dequantize(q);
    REQUIRE(y.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double absmax = q[i / 64].absmax;
      CHECK(std::fabs(x[i] - y[i]) <= absmax * half_gap);
      CHECK(std::fabs(y[i]) <= absmax);
      if (std::fabs(x[i]) > absmax * half_gap) CHECK(std::signbit(x[i]) == std::signbit(y[i]));
    }
    const auto again = nf4_quantize(y, 64);
    for (std::size_t b = 0; b < q.size(); ++b) {
      CHECK(codes_of(again[b]) == codes_of(q[b]));
      CHECK(again[b].absmax == q[b].absmax);
    }
  }

  TEST_CASE("blocks are independent") {
    Rng rng(3);
    std::vector<double> x(256);
    for (auto& v : x) v = rng.normal();
    const auto whole = nf4_quantize(x, 64);
    const auto tail = nf4_quantize(std::span<const double>(x).subspan(128), 64);
    CHECK(codes_of(whole[2]) == codes_of(tail[0]));
    CHECK(codes_of(whole[3]) == codes_of(tail[1]));
  }

  TEST_CASE("double quantization of the scales") {
    Rng rng(4);
    std::vector<double> absmax(600);
    for (auto& a : absmax) a = rng.uniform(0.01, 0.2);
    const DoubleQuantized dq = double_quantize(absmax, 256);
    CHECK(dq.codes.size() == 600);
    CHECK(dq.scales.size() == 3);
    const auto back = double_dequantize(dq);
    for (std::size_t i = 0; i < absmax.size(); ++i) {
      CHECK(back[i] >= 0.0);
      CHECK(std::fabs(back[i] - absmax[i]) <= dq.scales[i / 256] * 0.5 + 1e-15);
    }
    Tensor t = rng.normal_tensor({64, 64}, 1.0);
    const QuantizedTensor plain = quantize_tensor(t, 64, false);
    const QuantizedTensor packed = quantize_tensor(t, 64, true);
    CHECK(packed.storage_bytes() < plain.storage_bytes());
    CHECK(plain.storage_bytes() == 64 * 32 + 64 * 8);
  }

  TEST_CASE("model memory accounting") {
    ModelConfig mc;
    const Model m = init_model(mc, 1);
    const QuantizedModel qm = quantize_model(m, 64);
    std::size_t matrix_elems = 0;
    for (const auto& p : m.named_parameters())
      if (p.tensor.rank() == 2) matrix_elems += p.tensor.numel();
    CHECK(qm.memory.float64_bytes == matrix_elems * 8);
    CHECK(qm.memory.packed_bytes == matrix_elems / 2 + (matrix_elems / 64) * 8);
    CHECK(qm.memory.ratio() == (0.5 + 8.0 / 64.0) / 8.0);
    CHECK(qm.quantized.size() == 2 + 6 * 2 + 1);
    CHECK(qm.full_precision.size() == 2 * 2 + 1);

    LoraModel lm = inject_lora(m.clone(), LoraConfig{}, 2);
    lm.quantized = std::make_shared<QuantizedModel>(qm);
    for (const auto& p : lm.adapter_parameters()) {
      CHECK(p.tensor.requires_grad());
      CHECK(p.tensor.rank() == 2);
    }
    const Model mat = qm.materialize();
    CHECK(mat.final_norm.data()[0] == 1.0);
  }

  TEST_CASE("quantized forward keeps the greedy token of a trained model") {
    ModelConfig mc;
    mc.vocab_size = 258;
    mc.max_seq_len = 32;
    Model m = init_model(mc, 5);
    const std::string text = "the patient presents with fever and cough; the answer is (B). ";
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < 32; ++i) ids.push_back(static_cast<unsigned char>(text[i % text.size()]));
    std::vector<std::int64_t> targets(ids.begin() + 1, ids.end());
    targets.push_back(kIgnoreIndex);

    m.set_requires_grad(true);
    const auto params = m.named_parameters();
    TrainConfig tc;
    tc.weight_decay = 0.0;
    AdamState st;
    for (int step = 0; step < 40; ++step) {
      {
        Tape tape;
        TapeScope scope(tape);
        backward(ops::cross_entropy(forward(m, TokenBatch{ids, 1, 32}).logits, targets, kIgnoreIndex));
      }
      adamw_step(params, st, 3e-3, tc);
      for (auto p : params) p.tensor.clear_grad();
    }
    m.set_requires_grad(false);

    const Tensor full = forward(m, TokenBatch{ids, 1, 32}).logits;
    const Tensor quant = forward(quantize_model(m, 64).materialize(), TokenBatch{ids, 1, 32}).logits;
    std::size_t agree = 0;
    bool differs = false;
    for (std::size_t s = 0; s < 32; ++s) {
      const auto a = full.data().subspan(s * 258, 258);
      const auto b = quant.data().subspan(s * 258, 258);
      if (argmax(a) == argmax(b)) ++agree;
      for (std::size_t v = 0; v < 258; ++v) differs = differs || a[v] != b[v];
    }
    CHECK(differs);
    CHECK(static_cast<double>(agree) / 32.0 >= 0.9);
  }
}
