// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "asymfuse/fusion.hpp"
#include "asymfuse/layers.hpp"

namespace asymfuse {

struct ModelConfig {
  std::vector<std::size_t> rgb_widths{16, 32, 64, 128};
  std::vector<std::size_t> depth_widths{8, 16, 32, 64};
  std::size_t num_stages = 4;
  std::vector<FusionBlockConfig> fusion;
  std::size_t decoder_embed = 32;
  std::size_t num_classes = 6;
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::size_t depth_ffn_ratio = 2;

  /// Default toy widths with fusion sites derived from them.
  static ModelConfig make_default(FusionVariant variant = FusionVariant::kLafsCma);
  /// Narrow 16x16 configuration used for full-model gradient checks.
  static ModelConfig micro(FusionVariant variant = FusionVariant::kLafsCma);

  /// Rebuilds every fusion site for `variant`, keeping its reduction ratio.
  void set_variant(FusionVariant variant);
  FusionVariant variant() const;
  std::size_t stride() const { return std::size_t{1} << num_stages; }
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct RgbStage {
  Conv down;  // 3x3, stride 2
  Norm norm;
  Conv residual;  // 3x3, stride 1
};

struct DepthStage {
  Conv embed;  // 3x3 patch embedding, stride 2
  Norm attn_norm;
  Linear query, key, value, out;
  Norm ffn_norm;
  Linear ffn_in, ffn_out;
};

struct Decoder {
  std::vector<Linear> embed;  // per stage, -> decoder_embed
  Linear fuse;                // num_stages * decoder_embed -> decoder_embed
  Linear classify;            // decoder_embed -> num_classes
};

struct ModelInit {
  FusionInit fusion;
};

struct SegmentationModel {
  ModelConfig config;
  std::vector<RgbStage> rgb;
  std::vector<DepthStage> depth;
  std::vector<FusionParams> fusion;
  Decoder decoder;

  /// Named parameter groups, one per serialized block, in a fixed order.
  std::vector<std::pair<std::string, ParameterList>> blocks() const;
  ParameterList parameters() const;
  ParameterList rgb_parameters() const;
  ParameterList depth_parameters() const;
  ParameterList fusion_parameters() const;
  ParameterList decoder_parameters() const;
};

/// Encoder and decoder weights depend only on `seed`; fusion weights come from
/// their own stream, so variants built with one seed share everything else.
SegmentationModel build_model(const ModelConfig& config, std::uint64_t seed,
                              const ModelInit& init = {});

std::vector<Tensor> encode_rgb(const Tensor& image, const SegmentationModel& model);
std::vector<Tensor> encode_depth(const Tensor& depth, const SegmentationModel& model);

struct TokenAttention {
  Tensor output;   // residual attention sub-block output, (C,N)
  Tensor weights;  // (N,N)
};

/// Pre-norm single-head self-attention sub-block of one depth stage.
TokenAttention depth_attention(const Tensor& tokens, const DepthStage& stage);

struct ForwardResult {
  Tensor logits;                         // (num_classes,H,W)
  std::vector<Tensor> fused;             // per stage
  std::vector<Tensor> spatial_attention; // per stage, LAFS variants only
};

ForwardResult model_forward(const Tensor& rgb, const Tensor& depth, const SegmentationModel& model,
                            FusionVariant variant);
inline ForwardResult model_forward(const Tensor& rgb, const Tensor& depth,
                                   const SegmentationModel& model) {
  return model_forward(rgb, depth, model, model.config.variant());
}

/// Mean of logits computed at each input scale and resized back.
Tensor multi_scale_infer(const Tensor& rgb, const Tensor& depth, const SegmentationModel& model,
                         const std::vector<double>& scales);

/// Writes manifest.json plus one ATSR file per parameter block.
void save_checkpoint(const SegmentationModel& model, const std::filesystem::path& dir);
SegmentationModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace asymfuse
