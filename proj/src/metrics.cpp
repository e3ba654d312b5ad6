// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/metrics.hpp"

#include <numeric>

#include "asymfuse/error.hpp"

namespace asymfuse {

MetricAccumulator::MetricAccumulator(std::size_t num_classes, std::uint8_t ignore)
    : num_classes_(num_classes), ignore_(ignore), confusion_(num_classes * num_classes, 0) {
  require(num_classes > 0, ErrorCode::kInvalidArgument, "metrics need at least one class");
}

void MetricAccumulator::add(const LabelGrid& prediction, const LabelGrid& truth) {
  require(prediction.height == truth.height && prediction.width == truth.width,
          ErrorCode::kShapeMismatch, "prediction and label grids are not aligned");
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const std::uint8_t t = truth.values[i];
    if (t == ignore_) continue;
    const std::uint8_t p = prediction.values[i];
    if (t >= num_classes_ || p >= num_classes_)
      fail(ErrorCode::kInvalidArgument,
           "label " + std::to_string(t < num_classes_ ? p : t) + " out of range");
    ++confusion_[t * num_classes_ + p];
  }
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  require(other.num_classes_ == num_classes_, ErrorCode::kShapeMismatch,
          "cannot merge accumulators with different class counts");
  for (std::size_t i = 0; i < confusion_.size(); ++i) confusion_[i] += other.confusion_[i];
}

std::uint64_t MetricAccumulator::total() const {
  return std::accumulate(confusion_.begin(), confusion_.end(), std::uint64_t{0});
}

bool MetricAccumulator::present(std::size_t cls) const {
  for (std::size_t p = 0; p < num_classes_; ++p)
    if (count(cls, p) > 0) return true;
  return false;
}

double MetricAccumulator::iou(std::size_t cls) const {
  std::uint64_t row = 0, col = 0;
  for (std::size_t k = 0; k < num_classes_; ++k) {
    row += count(cls, k);
    col += count(k, cls);
  }
  const std::uint64_t diag = count(cls, cls);
  const std::uint64_t uni = row + col - diag;
  return uni == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(uni);
}

double MetricAccumulator::mean_iou() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < num_classes_; ++c) {
    if (!present(c)) continue;
    sum += iou(c);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double MetricAccumulator::pixel_accuracy() const {
  const std::uint64_t t = total();
  if (t == 0) return 0.0;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < num_classes_; ++c) trace += count(c, c);
  return static_cast<double>(trace) / static_cast<double>(t);
}

SegMetrics evaluate(const LabelGrid& prediction, const LabelGrid& truth, MetricAccumulator& acc) {
  acc.add(prediction, truth);
  return {acc.mean_iou(), acc.pixel_accuracy()};
}

LabelGrid argmax_labels(const Tensor& logits) {
  require(logits.rank() == 3, ErrorCode::kShapeMismatch, "argmax_labels expects (K,H,W)");
  const std::size_t k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  require(k < kIgnoreLabel, ErrorCode::kInvalidArgument, "too many classes for u8 labels");
  auto v = logits.values();
  LabelGrid out{h, w, std::vector<std::uint8_t>(h * w, 0)};
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (v[c * h * w + p] > v[best * h * w + p]) best = c;
    out.values[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace asymfuse
