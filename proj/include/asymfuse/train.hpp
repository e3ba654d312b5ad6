// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asymfuse/data.hpp"
#include "asymfuse/layers.hpp"
#include "asymfuse/metrics.hpp"
#include "asymfuse/network.hpp"

namespace asymfuse {

/// Linear warmup from 0 to base_lr over `warmup_iters`, then
/// base_lr * (1 - progress)^0.9 where progress runs 0 -> 1 over the remaining
/// iterations. Iterations past max_iter are clamped to 0 with a warning.
double poly_lr(std::size_t iter, std::size_t max_iter, double base_lr, std::size_t warmup_iters);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double base_lr = 5e-5;
};

struct OptimState {
  AdamWConfig hyper;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

OptimState make_optim_state(const ParameterList& params, const AdamWConfig& hyper = {});

/// Decoupled weight decay followed by a bias-corrected Adam update. Gradients
/// are read from the parameters themselves.
void adamw_step(const ParameterList& params, OptimState& state, double lr);

/// Mean over non-ignored pixels of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const LabelGrid& labels,
                     std::uint8_t ignore = kIgnoreLabel);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double miou = 0.0;       // over the epoch's training predictions
  double pixel_acc = 0.0;
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  /// Overrides epochs * steps_per_epoch when nonzero.
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;
  AdamWConfig optimizer;
  std::size_t warmup_steps = 0;
  bool augment = true;
  AugmentPolicy augmentation;
  /// Feed zeros to the depth branch (RGB-only control).
  bool zero_depth = false;
  std::function<void(const StepRecord&)> on_step;
};

/// Deterministic in (model init, samples, options). Gradients are averaged
/// over each batch. Throws Error(kDiverged) when the loss stops being finite.
TrainTrace train_loop(SegmentationModel& model, const std::vector<Sample>& samples,
                      const TrainOptions& options);

struct EvalOptions {
  std::vector<double> scales{1.0};
  bool zero_depth = false;
};

/// Predictions for every sample accumulated into one confusion matrix.
MetricAccumulator evaluate_model(const SegmentationModel& model, const std::vector<Sample>& samples,
                                 const EvalOptions& options = {});

void write_trace_csv(const std::string& path, const TrainTrace& trace);

}  // namespace asymfuse
