// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asymfuse/layers.hpp"
#include "asymfuse/tensor.hpp"

namespace asymfuse {

/// The five fusion sites compared in the ablation grid.
enum class FusionVariant { kCat, kSeMhsa, kLafs, kCma, kLafsCma };

inline constexpr std::array<FusionVariant, 5> kAllVariants = {
    FusionVariant::kCat, FusionVariant::kSeMhsa, FusionVariant::kLafs, FusionVariant::kCma,
    FusionVariant::kLafsCma};

std::string_view to_string(FusionVariant variant);
/// Accepts Cat, SE_MHSA, LAFS, CMA, LAFS_CMA (case-insensitive).
FusionVariant parse_variant(std::string_view name);

bool uses_lafs(FusionVariant v);
bool uses_cma(FusionVariant v);

struct FusionBlockConfig {
  std::size_t c_rgb = 0;
  std::size_t c_depth = 0;
  std::size_t c_fused = 0;  // c_rgb + c_depth
  std::size_t c_embed = 0;  // per-modality key/query width; value is 2 * c_embed
  std::size_t c_out = 0;
  std::size_t se_reduction = 4;
  std::size_t mhsa_heads = 2;
  FusionVariant variant = FusionVariant::kLafsCma;
  /// Overrides the subspace logit scale 1/sqrt(c_embed / 4).
  std::optional<double> attention_scale;

  /// c_embed = c_rgb rounded up to a multiple of 4, c_out = c_fused.
  static FusionBlockConfig for_widths(std::size_t c_rgb, std::size_t c_depth,
                                      FusionVariant variant, std::size_t se_reduction = 4);
  void validate() const;
  std::size_t se_hidden() const;
  double cma_scale() const;
};

/// C -> C/r -> C feedforward with a ReLU in between.
struct Bottleneck {
  Linear reduce;
  Linear expand;

  static Bottleneck make(std::size_t channels, std::size_t hidden, Initializer& init);
  Tensor operator()(const Tensor& v) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct LAFSParams {
  Bottleneck channel;  // SE channel attention
  Bottleneck spatial;  // produces the spatial descriptor R_Avg
};

struct LafsResult {
  Tensor output;           // (C,H,W)
  Tensor channel_weights;  // (C,1)
  Tensor spatial_weights;  // (1,H,W)
  Tensor descriptor;       // R_Avg, (C,1)
};

/// Local attention-guided feature selection over concat(rgb, depth).
LafsResult lafs_forward(const Tensor& rgb, const Tensor& depth, const LAFSParams& params);

struct CMAParams {
  Linear key_rgb;
  Linear query_rgb;
  Linear key_depth;
  Linear query_depth;
  Linear value;  // C -> 2 * c_embed
  Linear out;    // 2 * c_embed -> C
};

/// Shuffled, split key/query/value subspaces; every tensor is (c_embed, H*W).
struct CmaEmbedding {
  Tensor k1, k2, q1, q2, v1, v2;
  std::size_t height = 0;
  std::size_t width = 0;
};

CmaEmbedding cma_embed_shuffle(const Tensor& rgb, const Tensor& depth, const Tensor& fused,
                               const CMAParams& params);

struct CmaResult {
  Tensor output;  // (C,H,W)
  Tensor w1;      // (N,N), rows index query positions
  Tensor w2;
};

CmaResult cma_attend(const CmaEmbedding& embedding, const Tensor& fused_residual,
                     const CMAParams& params, double scale);

struct MhsaParams {
  Linear query;
  Linear key;
  Linear value;
  Linear out;
  std::size_t heads = 2;
};

struct MhsaResult {
  Tensor output;
  std::vector<Tensor> weights;
};

/// Multi-head self-attention on one feature map with a residual connection.
MhsaResult mhsa_forward(const Tensor& x, const MhsaParams& params);

struct FusionInit {
  /// Zero the attention output projections so CMA / MHSA start as identity.
  bool zero_attention_output = true;
};

/// Parameters of one fusion site. Every variant ends in the same 1x1
/// channel-adjust projection C -> c_out; the variants differ in what comes
/// before it.
struct FusionParams {
  FusionBlockConfig config;
  Linear project;
  std::optional<Bottleneck> se;
  std::optional<LAFSParams> lafs;
  std::optional<MhsaParams> mhsa;
  std::optional<CMAParams> cma;

  void collect(ParameterList& out, const std::string& prefix) const;
  ParameterList parameters() const;
};

FusionParams make_fusion_params(const FusionBlockConfig& config, Initializer& init,
                                const FusionInit& options = {});

struct FusionOutput {
  Tensor output;           // (c_out,H,W)
  Tensor spatial_weights;  // LAFS variants only
};

FusionOutput fusion_forward(const Tensor& rgb, const Tensor& depth, const FusionParams& params);

/// Cat and SE_MHSA reference fusions; other variants are rejected.
Tensor baseline_fusion(const Tensor& rgb, const Tensor& depth, const FusionParams& params);

}  // namespace asymfuse
