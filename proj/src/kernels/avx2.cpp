// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/kernels.hpp"

#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
#define ECIWB_HAVE_AVX2_KERNELS 1
#include <immintrin.h>

#include <cmath>
#endif

namespace eciwb::kernels {

#if defined(ECIWB_HAVE_AVX2_KERNELS)
namespace {

#define ECIWB_AVX2 __attribute__((target("avx2")))

ECIWB_AVX2 void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
                         const double* b, double* c) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const __m256d av = _mm256_set1_pd(aip);
      const double* brow = b + p * n;
      std::size_t j = 0;
      for (; j < n4; j += 4) {
        const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

ECIWB_AVX2 void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

ECIWB_AVX2 void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

ECIWB_AVX2 void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

ECIWB_AVX2 void scale(std::size_t n, double alpha, const double* x, double* out) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

ECIWB_AVX2 double absmax(std::size_t n, const double* x) {
  // Clearing the sign bit is exact, and max is order independent.
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d best = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) best = _mm256_max_pd(best, _mm256_andnot_pd(sign, _mm256_loadu_pd(x + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, best);
  double out = std::fmax(std::fmax(lanes[0], lanes[1]), std::fmax(lanes[2], lanes[3]));
  for (; i < n; ++i) out = std::fmax(out, std::fabs(x[i]));
  return out;
}

ECIWB_AVX2 void nf4_decode(std::size_t n, const std::uint8_t* packed, const double* codebook,
                           double absmax, double* out) {
  const __m256d scale_v = _mm256_set1_pd(absmax);
  std::size_t i = 0;
  // Four codes live in two bytes.
  for (; i + 4 <= n; i += 4) {
    const std::uint8_t b0 = packed[i / 2];
    const std::uint8_t b1 = packed[i / 2 + 1];
    const __m128i idx = _mm_setr_epi32(b0 & 0x0F, b0 >> 4, b1 & 0x0F, b1 >> 4);
    const __m256d vals = _mm256_i32gather_pd(codebook, idx, 8);
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vals, scale_v));
  }
  for (; i < n; ++i) {
    const std::uint8_t byte = packed[i / 2];
    const unsigned code = (i % 2 == 0) ? (byte & 0x0Fu) : (byte >> 4);
    out[i] = codebook[code] * absmax;
  }
}

#undef ECIWB_AVX2

}  // namespace

const KernelTable* avx2() {
  static const bool supported = __builtin_cpu_supports("avx2");
  static const KernelTable table{"avx2", gemm_acc, axpy, add, mul, scale, absmax, nf4_decode};
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2() { return nullptr; }

#endif

}  // namespace eciwb::kernels
