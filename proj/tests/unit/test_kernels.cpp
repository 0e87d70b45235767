#include <doctest.h>

#include <cstring>
#include <vector>

#include "eciwb/kernels.hpp"
#include "eciwb/quantization.hpp"
#include "eciwb/rng.hpp"

using namespace eciwb;

namespace {

std::vector<const kernels::KernelTable*> simd_tables() {
  std::vector<const kernels::KernelTable*> out;
  if (auto* t = kernels::avx2()) out.push_back(t);
  if (auto* t = kernels::neon()) out.push_back(t);
  return out;
}

std::vector<double> randv(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("active table is one of the known variants") {
    const auto name = kernels::active().name;
    CHECK((name == "scalar" || name == "avx2" || name == "neon"));
    CHECK(kernels::scalar().name == "scalar");
  }

  TEST_CASE("scalar gemm matches a naive triple loop") {
    Rng rng(1);
    const std::size_t m = 3, n = 5, k = 4;
    auto a = randv(rng, m * k), b = randv(rng, k * n), c = randv(rng, m * n);
    auto expect = c;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
        expect[i * n + j] += s;
      }
    kernels::scalar().gemm_acc(m, n, k, a.data(), b.data(), c.data());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  TEST_CASE("SIMD variants are bitwise identical to scalar") {
    const auto tables = simd_tables();
    if (tables.empty()) MESSAGE("no SIMD variant on this CPU; scalar only");
    Rng rng(7);
    const auto& ref = kernels::scalar();
    for (const auto* t : tables) {
      for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 17u, 64u, 131u}) {
        auto x = randv(rng, n), y = randv(rng, n);
        std::vector<double> o1(n), o2(n);
        ref.add(n, x.data(), y.data(), o1.data());
        t->add(n, x.data(), y.data(), o2.data());
        CHECK(bitwise_equal(o1, o2));
        ref.mul(n, x.data(), y.data(), o1.data());
        t->mul(n, x.data(), y.data(), o2.data());
        CHECK(bitwise_equal(o1, o2));
        ref.scale(n, 0.37, x.data(), o1.data());
        t->scale(n, 0.37, x.data(), o2.data());
        CHECK(bitwise_equal(o1, o2));
        auto y1 = y, y2 = y;
        ref.axpy(n, -1.3, x.data(), y1.data());
        t->axpy(n, -1.3, x.data(), y2.data());
        CHECK(bitwise_equal(y1, y2));
        CHECK(ref.absmax(n, x.data()) == t->absmax(n, x.data()));

        std::vector<std::uint8_t> packed((n + 1) / 2);
        for (auto& p : packed) p = static_cast<std::uint8_t>(rng.below(256));
        ref.nf4_decode(n, packed.data(), nf4_codebook().data(), 0.8, o1.data());
        t->nf4_decode(n, packed.data(), nf4_codebook().data(), 0.8, o2.data());
        CHECK(bitwise_equal(o1, o2));
      }
      for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {4, 8, 2}, {7, 13, 9}, {16, 33, 5}}) {
        auto a = randv(rng, m * k), b = randv(rng, k * n), c = randv(rng, m * n);
        auto c1 = c, c2 = c;
        ref.gemm_acc(m, n, k, a.data(), b.data(), c1.data());
        t->gemm_acc(m, n, k, a.data(), b.data(), c2.data());
        CHECK(bitwise_equal(c1, c2));
      }
    }
  }
}
