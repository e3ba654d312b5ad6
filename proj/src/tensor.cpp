// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "asymfuse/error.hpp"

namespace asymfuse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kMissingGrad: return "missing_grad";
    case ErrorCode::kDiverged: return "diverged";
  }
  return "unknown";
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data,
                                       bool requires_grad) {
  for (std::size_t d : shape) {
    require(d > 0, ErrorCode::kShapeMismatch, "tensor dimensions must be positive");
  }
  require(numel(shape) == data.size(), ErrorCode::kShapeMismatch,
          "value count " + std::to_string(data.size()) + " does not match shape " +
              to_string(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  require(defined(), ErrorCode::kInvalidArgument, "use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < rank(), ErrorCode::kInvalidArgument,
          "axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return defined() ? node_->data.size() : 0; }

std::span<const double> Tensor::values() const {
  require(defined(), ErrorCode::kInvalidArgument, "use of undefined tensor");
  return node_->data;
}

std::span<double> Tensor::mutable_values() {
  require(defined(), ErrorCode::kInvalidArgument, "use of undefined tensor");
  require(node_->is_leaf(), ErrorCode::kInvalidArgument,
          "in-place write to an operation result (" + std::string(node_->op) + ")");
  return node_->data;
}

double Tensor::item() const {
  require(size() == 1, ErrorCode::kShapeMismatch,
          "item() needs a single-element tensor, got " + to_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }
bool Tensor::is_leaf() const { return defined() && node_->is_leaf(); }
bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require(has_grad(), ErrorCode::kMissingGrad, "tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (defined()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(shape(), node_->data, false);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(shape(), node_->data, requires_grad);
}

std::string_view Tensor::op_name() const { return defined() ? node_->op : "undefined"; }
std::uint64_t Tensor::sequence() const { return defined() ? node_->seq : 0; }

std::span<const double> BackwardContext::out_grad() const { return node_.grad; }
std::span<const double> BackwardContext::out_values() const { return node_.data; }

bool BackwardContext::needs_grad(std::size_t input) const {
  return node_.inputs.at(input)->requires_grad;
}

std::span<double> BackwardContext::input_grad(std::size_t input) {
  detail::Node& in = *node_.inputs.at(input);
  if (!in.requires_grad) return {};
  if (in.grad.size() != in.data.size()) in.grad.assign(in.data.size(), 0.0);
  return in.grad;
}

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  bool track = false;
  if (t_grad_enabled) {
    for (const Tensor& t : inputs) track = track || t.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(values), track);
  node->op = op;
  if (track) {
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Graph Graph::trace(const Tensor& root) {
  Graph graph;
  if (!root.requires_grad()) return graph;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node_};
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : node->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
    }
    graph.nodes_.push_back(std::move(node));
  }
  std::sort(graph.nodes_.begin(), graph.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return graph;
}

std::vector<std::string> Graph::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.emplace_back(n->op);
  return names;
}

std::vector<std::uint64_t> Graph::sequence() const {
  std::vector<std::uint64_t> seq;
  seq.reserve(nodes_.size());
  for (const auto& n : nodes_) seq.push_back(n->seq);
  return seq;
}

BackwardStats backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, ErrorCode::kShapeMismatch,
          "backward() needs a scalar loss");
  BackwardStats stats;
  Graph graph = Graph::trace(loss);
  if (graph.nodes_.empty()) {
    stats.detached = true;
    return stats;
  }
  for (auto& node : graph.nodes_) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0);
  }
  auto& root = *graph.nodes_.back();
  if (root.grad.size() != 1) root.grad.assign(1, 0.0);
  root.grad[0] += 1.0;

  bool reaches_leaf = false;
  for (auto it = graph.nodes_.rbegin(); it != graph.nodes_.rend(); ++it) {
    detail::Node& node = **it;
    ++stats.nodes_visited;
    if (node.is_leaf()) {
      reaches_leaf = true;
      continue;
    }
    BackwardContext ctx(node);
    node.backward(ctx);
  }
  stats.detached = !reaches_leaf;
  return stats;
}

}  // namespace asymfuse
