// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/layers.hpp"

#include <cmath>

#include "asymfuse/ops.hpp"

namespace asymfuse {

void ParameterList::add(std::string name, Tensor value) {
  items_.push_back({std::move(name), std::move(value)});
}

void ParameterList::append(const ParameterList& other) {
  items_.insert(items_.end(), other.items_.begin(), other.items_.end());
}

std::size_t ParameterList::element_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

void ParameterList::zero_grad() {
  for (auto& p : items_) p.value.zero_grad();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor Initializer::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng_);
  return Tensor(std::move(shape), std::move(v), true);
}

Linear Linear::make(std::size_t cin, std::size_t cout, Initializer& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin));
  Linear l;
  l.weight = init.uniform({cout, cin}, bound);
  l.bias = init.uniform({cout}, bound);
  return l;
}

Linear Linear::zero(std::size_t cin, std::size_t cout) {
  return {Tensor::zeros({cout, cin}, true), Tensor::zeros({cout}, true)};
}

Linear Linear::identity(std::size_t channels) {
  std::vector<double> w(channels * channels, 0.0);
  for (std::size_t i = 0; i < channels; ++i) w[i * channels + i] = 1.0;
  return {Tensor({channels, channels}, std::move(w), true), Tensor::zeros({channels}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return ops::pointwise(x, weight, bias); }

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

Conv Conv::make(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                std::size_t pad, Initializer& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  Conv c;
  c.weight = init.uniform({cout, cin, k, k}, bound);
  c.bias = init.uniform({cout}, bound);
  c.stride = stride;
  c.pad = pad;
  return c;
}

Tensor Conv::operator()(const Tensor& x) const {
  return ops::conv2d(x, weight, bias, stride, pad);
}

void Conv::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

Norm Norm::make(std::size_t channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true)};
}

Tensor Norm::operator()(const Tensor& x) const {
  return ops::layer_norm_channels(x, gamma, beta);
}

void Norm::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
}

}  // namespace asymfuse
