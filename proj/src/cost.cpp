// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/cost.hpp"

#include "asymfuse/error.hpp"

namespace asymfuse {
namespace {

std::size_t conv_out(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
  require(n + 2 * pad >= k && stride > 0, ErrorCode::kInvalidArgument,
          "conv_cost: kernel larger than padded input");
  return (n + 2 * pad - k) / stride + 1;
}

Cost bottleneck_cost(std::size_t c, std::size_t hidden) {
  return linear_cost(c, hidden, 1) + linear_cost(hidden, c, 1);
}

}  // namespace

Cost linear_cost(std::size_t cin, std::size_t cout, std::size_t positions, bool bias) {
  return {cin * cout + (bias ? cout : 0), std::uint64_t{cin} * cout * positions};
}

Cost conv_cost(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride,
               std::size_t pad, std::size_t h, std::size_t w, bool bias) {
  const std::size_t oh = conv_out(h, k, stride, pad), ow = conv_out(w, k, stride, pad);
  return {k * k * cin * cout + (bias ? cout : 0), std::uint64_t{k} * k * cin * cout * oh * ow};
}

Cost attention_cost(std::size_t queries, std::size_t keys, std::size_t qk_dim, std::size_t v_dim) {
  return {0, std::uint64_t{queries} * keys * (qk_dim + v_dim)};
}

Cost norm_cost(std::size_t channels) { return {2 * channels, 0}; }

Cost lafs_cost(std::size_t channels, std::size_t hidden, std::size_t h, std::size_t w) {
  Cost c = bottleneck_cost(channels, hidden) + bottleneck_cost(channels, hidden);
  c.macs += std::uint64_t{channels} * h * w;  // token-descriptor product
  return c;
}

Cost fusion_cost(const FusionBlockConfig& config, std::size_t h, std::size_t w) {
  config.validate();
  const std::size_t c = config.c_fused, n = h * w;
  Cost cost = linear_cost(c, config.c_out, n);
  switch (config.variant) {
    case FusionVariant::kCat:
      break;
    case FusionVariant::kSeMhsa: {
      cost += bottleneck_cost(c, config.se_hidden());
      for (int i = 0; i < 4; ++i) cost += linear_cost(c, c, n);
      const std::size_t hd = c / config.mhsa_heads;
      for (std::size_t i = 0; i < config.mhsa_heads; ++i) cost += attention_cost(n, n, hd, hd);
      break;
    }
    case FusionVariant::kLafs:
    case FusionVariant::kCma:
    case FusionVariant::kLafsCma:
      if (uses_lafs(config.variant)) cost += lafs_cost(c, config.se_hidden(), h, w);
      if (uses_cma(config.variant)) {
        const std::size_t ce = config.c_embed;
        cost += linear_cost(config.c_rgb, ce, n) + linear_cost(config.c_rgb, ce, n);
        cost += linear_cost(config.c_depth, ce, n) + linear_cost(config.c_depth, ce, n);
        cost += linear_cost(c, 2 * ce, n);
        cost += attention_cost(n, n, ce, ce) + attention_cost(n, n, ce, ce);
        cost += linear_cost(2 * ce, c, n);
      }
      break;
  }
  return cost;
}

Cost ModelCost::fusion_total() const {
  Cost c;
  for (const auto& f : fusion) c += f;
  return c;
}

Cost ModelCost::total() const { return rgb + depth + decoder + fusion_total(); }

ModelCost model_cost(const ModelConfig& config) {
  config.validate();
  ModelCost mc;
  std::size_t h = config.input_height, w = config.input_width;
  std::size_t rgb_in = 3, depth_in = 1;
  const std::size_t h4 = config.input_height / 4, w4 = config.input_width / 4;
  for (std::size_t i = 0; i < config.num_stages; ++i) {
    const std::size_t c = config.rgb_widths[i], d = config.depth_widths[i];
    mc.rgb += conv_cost(rgb_in, c, 3, 2, 1, h, w);
    const std::size_t sh = conv_out(h, 3, 2, 1), sw = conv_out(w, 3, 2, 1), n = sh * sw;
    mc.rgb += norm_cost(c) + conv_cost(c, c, 3, 1, 1, sh, sw);

    mc.depth += conv_cost(depth_in, d, 3, 2, 1, h, w);
    mc.depth += norm_cost(d) + norm_cost(d);
    for (int j = 0; j < 4; ++j) mc.depth += linear_cost(d, d, n);
    mc.depth += attention_cost(n, n, d, d);
    mc.depth += linear_cost(d, d * config.depth_ffn_ratio, n);
    mc.depth += linear_cost(d * config.depth_ffn_ratio, d, n);

    mc.fusion.push_back(fusion_cost(config.fusion[i], sh, sw));
    mc.decoder += linear_cost(config.fusion[i].c_out, config.decoder_embed, n);

    h = sh;
    w = sw;
    rgb_in = c;
    depth_in = d;
  }
  const std::size_t e = config.decoder_embed;
  mc.decoder += linear_cost(config.num_stages * e, e, h4 * w4);
  mc.decoder += linear_cost(e, config.num_classes, h4 * w4);
  return mc;
}

Cost count_params_flops(const FusionParams& params, std::size_t h, std::size_t w) {
  ParameterList list = params.parameters();
  return {list.element_count(), fusion_cost(params.config, h, w).macs};
}

Cost count_params_flops(const SegmentationModel& model) {
  return {model.parameters().element_count(), model_cost(model.config).total().macs};
}

}  // namespace asymfuse
