// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "asymfuse/error.hpp"

namespace asymfuse {

GradCheckResult gradcheck(const std::function<Tensor()>& loss_fn,
                          const std::vector<NamedInput>& inputs,
                          const GradCheckOptions& options) {
  for (const auto& in : inputs) {
    require(in.tensor.is_leaf() && in.tensor.requires_grad(), ErrorCode::kInvalidArgument,
            "gradcheck input '" + in.name + "' must be a tracked leaf");
  }
  std::vector<Tensor> leaves;
  for (const auto& in : inputs) {
    leaves.push_back(in.tensor);
    leaves.back().zero_grad();
  }
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : leaves) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensor& t = leaves[k];
    auto values = t.mutable_values();
    const std::size_t n = values.size();
    std::size_t step = 1;
    if (options.max_entries_per_tensor > 0 && n > options.max_entries_per_tensor) {
      step = (n + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += step) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double plus = loss_fn().item();
      values[i] = saved - options.epsilon;
      const double minus = loss_fn().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_rel_error || result.entries_checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        if (rel >= result.max_rel_error) result.worst = {inputs[k].name, i, a, numeric, rel};
      }
    }
  }
  return result;
}

}  // namespace asymfuse
