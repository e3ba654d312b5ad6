// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "asymfuse/tensor.hpp"

// Differentiable primitives. Feature maps are laid out (C, H, W); token
// sequences are (C, N). Broadcasting is limited to the named channel and
// position scaling ops plus batched matmul with a shared right operand.
namespace asymfuse::ops {

Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Numerically stabilized softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

enum class Transpose { kNo, kYes };

/// (M,K)x(K,N). Rank-3 left operands are batched; the right operand may be
/// rank 3 with the same batch or rank 2 and shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b, Transpose ta = Transpose::kNo,
              Transpose tb = Transpose::kNo);
Tensor transpose(const Tensor& x);

/// Zero-padded cross-correlation. `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t pad);

/// Align-corners-false bilinear resampling of a (C,H,W) map.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
inline Tensor bilinear_upsample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  return bilinear_resize(x, out_h, out_w);
}

/// (C,H,W) -> (C,1,1) channel means.
Tensor adaptive_avg_pool_global(const Tensor& x);

/// Output channel g + groups*i takes input channel i + (C/groups)*g.
Tensor channel_shuffle(const Tensor& x, std::size_t groups);
/// Inverse permutation of channel_shuffle with the same group count.
Tensor channel_unshuffle(const Tensor& x, std::size_t groups);
/// Output channel c takes input channel source[c]; `source` must be a permutation.
Tensor permute_channels(const Tensor& x, std::span<const std::size_t> source);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

/// x(C,...) scaled by w, where w holds C values.
Tensor scale_channels(const Tensor& x, const Tensor& w);
/// x(C,...) scaled per spatial position by w, where w holds numel/C values.
Tensor scale_positions(const Tensor& x, const Tensor& w);
/// x(C,...) plus per-channel b(C).
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

/// Per-position normalization across channels of x(C,...), then affine.
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           double eps = 1e-6);

/// 1x1 projection of x(Cin,...) by weight(Cout,Cin) plus optional bias(Cout).
Tensor pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace asymfuse::ops
