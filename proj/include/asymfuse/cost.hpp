// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "asymfuse/fusion.hpp"
#include "asymfuse/network.hpp"

namespace asymfuse {

/// Parameter count and multiply-accumulates. Only products inside convs,
/// linear maps, matmuls and attention are counted; elementwise scaling,
/// normalization and resizing are free. One MAC is two FLOPs.
struct Cost {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;

  std::uint64_t flops() const { return 2 * macs; }
  Cost& operator+=(const Cost& o) {
    params += o.params;
    macs += o.macs;
    return *this;
  }
  friend Cost operator+(Cost a, const Cost& b) { return a += b; }
  bool operator==(const Cost&) const = default;
};

/// Cin -> Cout map applied at `positions` positions.
Cost linear_cost(std::size_t cin, std::size_t cout, std::size_t positions, bool bias = true);
/// k x k convolution on an h x w input.
Cost conv_cost(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
               std::size_t pad, std::size_t h, std::size_t w, bool bias = true);
/// Scaled dot-product attention without projections.
Cost attention_cost(std::size_t queries, std::size_t keys, std::size_t qk_dim, std::size_t v_dim);
Cost norm_cost(std::size_t channels);

Cost lafs_cost(std::size_t channels, std::size_t hidden, std::size_t h, std::size_t w);
Cost fusion_cost(const FusionBlockConfig& config, std::size_t h, std::size_t w);

struct ModelCost {
  Cost rgb;
  Cost depth;
  Cost decoder;
  std::vector<Cost> fusion;  // per stage

  Cost fusion_total() const;
  Cost total() const;
};

/// Analytic cost at the configured input size.
ModelCost model_cost(const ModelConfig& config);

/// Parameters counted from the tensors themselves; MACs from the analytic
/// formula at h x w.
Cost count_params_flops(const FusionParams& params, std::size_t h, std::size_t w);
Cost count_params_flops(const SegmentationModel& model);

}  // namespace asymfuse
