// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "eciwb/kernels.hpp"

namespace eciwb::kernels {
namespace {

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
              double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, double alpha, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

double absmax(std::size_t n, const double* x) {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) best = std::fmax(best, std::fabs(x[i]));
  return best;
}

void nf4_decode(std::size_t n, const std::uint8_t* packed, const double* codebook, double absmax,
                double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t byte = packed[i / 2];
    const unsigned code = (i % 2 == 0) ? (byte & 0x0Fu) : (byte >> 4);
    out[i] = codebook[code] * absmax;
  }
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{"scalar", gemm_acc, axpy, add, mul, scale, absmax, nf4_decode};
  return table;
}

}  // namespace eciwb::kernels
