// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "asymfuse/data.hpp"
#include "asymfuse/tensor.hpp"

namespace asymfuse {

/// Confusion matrix over scored pixels; rows are ground truth, columns are
/// predictions. Pixels whose ground truth is the ignore label are skipped.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::size_t num_classes, std::uint8_t ignore = kIgnoreLabel);

  void add(const LabelGrid& prediction, const LabelGrid& truth);
  void merge(const MetricAccumulator& other);

  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t count(std::size_t truth, std::size_t pred) const {
    return confusion_[truth * num_classes_ + pred];
  }
  std::uint64_t total() const;
  bool present(std::size_t cls) const;
  double iou(std::size_t cls) const;
  /// Mean IoU over classes that occur in the ground truth.
  double mean_iou() const;
  double pixel_accuracy() const;

 private:
  std::size_t num_classes_;
  std::uint8_t ignore_;
  std::vector<std::uint64_t> confusion_;
};

struct SegMetrics {
  double miou = 0.0;
  double pixel_acc = 0.0;
};

/// Adds one prediction to `acc` and returns the accumulated metrics.
SegMetrics evaluate(const LabelGrid& prediction, const LabelGrid& truth, MetricAccumulator& acc);

/// Per-pixel argmax over the class axis of (K,H,W) logits.
LabelGrid argmax_labels(const Tensor& logits);

}  // namespace asymfuse
