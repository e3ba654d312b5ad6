// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "asymfuse/tensor.hpp"

namespace asymfuse {

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Denominator floor for the relative error so that entries whose true
  /// gradient is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  /// Check at most this many entries per tensor (evenly strided); 0 = all.
  std::size_t max_entries_per_tensor = 0;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  GradCheckEntry worst;
};

struct NamedInput {
  std::string name;
  Tensor tensor;
};

/// Compares analytic gradients of `loss_fn` against central differences.
/// Every tensor in `inputs` must be a leaf with requires_grad set; their values
/// are perturbed in place and restored. Relative error per entry is
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn,
                          const std::vector<NamedInput>& inputs,
                          const GradCheckOptions& options = {});

}  // namespace asymfuse
