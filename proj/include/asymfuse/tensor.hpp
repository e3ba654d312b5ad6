// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace asymfuse {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class BackwardContext;
using BackwardFn = std::function<void(BackwardContext&)>;

/// Dense row-major float64 array with optional gradient tracking.
///
/// A Tensor is a cheap handle: copies share the same underlying node. Values
/// produced by an operation are immutable; only leaves (parameters, inputs)
/// may be written in place, which is how optimizers update parameters.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  /// In-place access for leaf tensors. Throws for operation results.
  std::span<double> mutable_values();
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no history, no gradient tracking.
  Tensor detach() const;
  /// Deep copy as a new leaf.
  Tensor clone(bool requires_grad = false) const;

  std::string_view op_name() const;
  std::uint64_t sequence() const;

 private:
  friend class Graph;
  friend class BackwardContext;
  friend Tensor make_result(std::string_view, Shape, std::vector<double>,
                            const std::vector<Tensor>&, BackwardFn);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

/// View handed to an operation's backward closure.
class BackwardContext {
 public:
  explicit BackwardContext(detail::Node& node) : node_(node) {}

  std::span<const double> out_grad() const;
  std::span<const double> out_values() const;
  bool needs_grad(std::size_t input) const;
  /// Gradient buffer of input `input`; empty when that input is not tracked.
  std::span<double> input_grad(std::size_t input);

 private:
  detail::Node& node_;
};

/// Builds an operation result. When gradient tracking is off or no input
/// requires a gradient, the backward closure is dropped and the result is a
/// plain constant.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct BackwardStats {
  std::size_t nodes_visited = 0;
  /// True when the loss is not connected to any tracked leaf.
  bool detached = false;
};

/// The recorded operations reachable from a root, in execution order.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;
  std::vector<std::uint64_t> sequence() const;

 private:
  friend BackwardStats backward(const Tensor& loss);
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls until zero_grad(); intermediate gradients are recomputed each call.
BackwardStats backward(const Tensor& loss);

}  // namespace asymfuse
