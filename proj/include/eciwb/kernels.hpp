// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Data-parallel inner loops used by the tensor ops and the NF4 codec.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 (x86-64) or NEON (aarch64) variant. The SIMD variants
// vectorize only across independent output lanes and use separate multiply
// and add instructions, so they produce results bit-identical to the scalar
// reference. Dispatch happens once, at first use, based on the CPU; setting
// ECIWB_KERNELS=scalar forces the reference path.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace eciwb::kernels {

struct KernelTable {
  std::string_view name;

  // c[m x n] += a[m x k] * b[k x n], all row-major and contiguous.
  void (*gemm_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                   double* c);
  // y[i] += alpha * x[i]
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // out[i] = x[i] + y[i]
  void (*add)(std::size_t n, const double* x, const double* y, double* out);
  // out[i] = x[i] * y[i]
  void (*mul)(std::size_t n, const double* x, const double* y, double* out);
  // out[i] = alpha * x[i]
  void (*scale)(std::size_t n, double alpha, const double* x, double* out);
  // max_i |x[i]|, 0 for n == 0
  double (*absmax)(std::size_t n, const double* x);
  // out[i] = codebook[code_i] * absmax, codes packed two per byte, low nibble first
  void (*nf4_decode)(std::size_t n, const std::uint8_t* packed, const double* codebook,
                     double absmax, double* out);
};

const KernelTable& scalar();

// nullptr when the variant is not compiled in or the CPU lacks the extension.
const KernelTable* avx2();
const KernelTable* neon();

// The table selected for this process.
const KernelTable& active();

}  // namespace eciwb::kernels
