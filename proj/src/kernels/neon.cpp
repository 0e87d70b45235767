// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#define ECIWB_HAVE_NEON_KERNELS 1
#include <arm_neon.h>

#include <cmath>
#endif

namespace eciwb::kernels {

#if defined(ECIWB_HAVE_NEON_KERNELS)
namespace {

// NEON is mandatory on aarch64; float64x2_t gives two lanes.

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const float64x2_t av = vdupq_n_f64(aip);
      const double* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) {
        const float64x2_t prod = vmulq_f64(av, vld1q_f64(brow + j));
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(av, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(av, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double absmax(std::size_t n, const double* x) {
  float64x2_t best = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) best = vmaxq_f64(best, vabsq_f64(vld1q_f64(x + i)));
  double out = std::fmax(vgetq_lane_f64(best, 0), vgetq_lane_f64(best, 1));
  for (; i < n; ++i) out = std::fmax(out, std::fabs(x[i]));
  return out;
}

void nf4_decode(std::size_t n, const std::uint8_t* packed, const double* codebook, double absmax,
                double* out) {
  const float64x2_t scale_v = vdupq_n_f64(absmax);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const std::uint8_t byte = packed[i / 2];
    const double pair[2] = {codebook[byte & 0x0F], codebook[byte >> 4]};
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(pair), scale_v));
  }
  for (; i < n; ++i) {
    const std::uint8_t byte = packed[i / 2];
    out[i] = codebook[(i % 2 == 0) ? (byte & 0x0F) : (byte >> 4)] * absmax;
  }
}

}  // namespace

const KernelTable* neon() {
  static const KernelTable table{"neon", gemm_acc, axpy, add, mul, scale, absmax, nf4_decode};
  return &table;
}

#else

const KernelTable* neon() { return nullptr; }

#endif

}  // namespace eciwb::kernels
