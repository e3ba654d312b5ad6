// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "asymfuse/ops.hpp"
#include "asymfuse/tensor.hpp"

namespace asymfuse::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false,
                            double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

/// sum(x * r) for a fixed random r, so every output entry gets a distinct
/// upstream gradient.
inline Tensor probe_loss(const Tensor& x, std::uint64_t seed = 7777) {
  return ops::sum(ops::mul(x, random_tensor(x.shape(), seed)));
}

inline constexpr double kGradTol = 1e-4;

}  // namespace asymfuse::testing
