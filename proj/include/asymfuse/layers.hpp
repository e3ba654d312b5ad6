// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "asymfuse/tensor.hpp"

namespace asymfuse {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered, named view over a model's trainable tensors.
class ParameterList {
 public:
  void add(std::string name, Tensor value);
  void append(const ParameterList& other);

  const std::vector<NamedTensor>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t element_count() const;
  void zero_grad();

 private:
  std::vector<NamedTensor> items_;
};

/// Derives an independent stream seed from a base seed and a stream label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// Uniform in [-bound, bound].
  Tensor uniform(Shape shape, double bound);
  Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
  Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Per-position affine map (Cin -> Cout), i.e. a 1x1 convolution.
struct Linear {
  Tensor weight;  // (Cout, Cin)
  Tensor bias;    // (Cout)

  static Linear make(std::size_t cin, std::size_t cout, Initializer& init);
  static Linear zero(std::size_t cin, std::size_t cout);
  static Linear identity(std::size_t channels);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct Conv {
  Tensor weight;  // (Cout, Cin, k, k)
  Tensor bias;    // (Cout)
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv make(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
                   std::size_t pad, Initializer& init);

  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Channel-wise layer normalization with learnable affine.
struct Norm {
  Tensor gamma;
  Tensor beta;

  static Norm make(std::size_t channels);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

}  // namespace asymfuse
