// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/rng.hpp"

#include <cmath>
#include <numbers>

namespace eciwb {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = stddev * normal();
  return Tensor::from(std::move(shape), std::move(values));
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace eciwb
