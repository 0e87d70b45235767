// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eciwb/tensor.hpp"

namespace eciwb {

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares backward() against central differences for every element of every
// input with requires_grad set. The error of one element is
// |analytic - fd| / max(|analytic|, |fd|, 1e-8). Inputs are restored and their
// gradients cleared on return.
GradCheckResult grad_check_detailed(const ScalarFn& f, std::span<Tensor> inputs, double eps = 1e-5);

inline double grad_check(const ScalarFn& f, std::span<Tensor> inputs, double eps = 1e-5) {
  return grad_check_detailed(f, inputs, eps).max_rel_error;
}

// One registered differentiable op for the gradient suite. `run` builds random
// inputs for shape variant `variant` (0, 1, 2, ...) and returns the max
// relative error of grad_check.
struct OpCheck {
  std::string name;
  std::function<double(std::uint64_t seed, int variant)> run;
};

struct OpCheckOutcome {
  std::string name;
  std::vector<double> errors;  // one per variant
  double worst = 0.0;
  bool passed = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr int kGradCheckVariants = 3;

// Every differentiable primitive plus the composite paths (LoRA projection,
// ECI head, joint loss, transformer forward).
std::vector<OpCheck> builtin_op_checks();

std::vector<OpCheckOutcome> run_op_checks(const std::vector<OpCheck>& checks, std::uint64_t seed,
                                          int variants = kGradCheckVariants,
                                          double tolerance = kGradCheckTolerance);

}  // namespace eciwb
