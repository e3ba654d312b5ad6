// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "asymfuse/error.hpp"
#include "asymfuse/ops.hpp"

namespace asymfuse {

using ops::Transpose;

std::string_view to_string(FusionVariant variant) {
  switch (variant) {
    case FusionVariant::kCat: return "Cat";
    case FusionVariant::kSeMhsa: return "SE_MHSA";
    case FusionVariant::kLafs: return "LAFS";
    case FusionVariant::kCma: return "CMA";
    case FusionVariant::kLafsCma: return "LAFS_CMA";
  }
  return "unknown";
}

FusionVariant parse_variant(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::replace(upper.begin(), upper.end(), '+', '_');
  for (FusionVariant v : kAllVariants) {
    std::string candidate(to_string(v));
    std::transform(candidate.begin(), candidate.end(), candidate.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (candidate == upper) return v;
  }
  fail(ErrorCode::kInvalidArgument, "unknown fusion variant '" + std::string(name) + "'");
}

bool uses_lafs(FusionVariant v) {
  return v == FusionVariant::kLafs || v == FusionVariant::kLafsCma;
}

bool uses_cma(FusionVariant v) { return v == FusionVariant::kCma || v == FusionVariant::kLafsCma; }

FusionBlockConfig FusionBlockConfig::for_widths(std::size_t c_rgb, std::size_t c_depth,
                                                FusionVariant variant, std::size_t se_reduction) {
  FusionBlockConfig c;
  c.c_rgb = c_rgb;
  c.c_depth = c_depth;
  c.c_fused = c_rgb + c_depth;
  c.c_embed = (c_rgb + 3) / 4 * 4;
  c.c_out = c.c_fused;
  c.se_reduction = se_reduction;
  c.variant = variant;
  return c;
}

void FusionBlockConfig::validate() const {
  require(c_rgb > 0 && c_depth > 0, ErrorCode::kConfig, "fusion widths must be positive");
  require(c_fused == c_rgb + c_depth, ErrorCode::kConfig,
          "c_fused must equal c_rgb + c_depth (" + std::to_string(c_rgb + c_depth) + "), got " +
              std::to_string(c_fused));
  require(c_embed > 0 && c_embed % 4 == 0, ErrorCode::kConfig,
          "c_embed must be a positive multiple of 4, got " + std::to_string(c_embed));
  require(c_out > 0, ErrorCode::kConfig, "c_out must be positive");
  require(se_reduction >= 1 && se_reduction <= c_fused, ErrorCode::kConfig,
          "se_reduction must lie in [1, c_fused]");
  require(mhsa_heads >= 1 && c_fused % mhsa_heads == 0, ErrorCode::kConfig,
          "mhsa_heads must divide c_fused");
  if (attention_scale) {
    require(std::isfinite(*attention_scale) && *attention_scale > 0.0, ErrorCode::kConfig,
            "attention_scale must be positive");
  }
}

std::size_t FusionBlockConfig::se_hidden() const { return std::max<std::size_t>(1, c_fused / se_reduction); }

double FusionBlockConfig::cma_scale() const {
  return attention_scale.value_or(1.0 / std::sqrt(static_cast<double>(c_embed) / 4.0));
}

Bottleneck Bottleneck::make(std::size_t channels, std::size_t hidden, Initializer& init) {
  Bottleneck b;
  b.reduce = Linear::make(channels, hidden, init);
  b.expand = Linear::make(hidden, channels, init);
  return b;
}

Tensor Bottleneck::operator()(const Tensor& v) const { return expand(ops::relu(reduce(v))); }

void Bottleneck::collect(ParameterList& out, const std::string& prefix) const {
  reduce.collect(out, prefix + ".reduce");
  expand.collect(out, prefix + ".expand");
}

namespace {

void require_aligned(const Tensor& a, const Tensor& b, const char* what) {
  require(a.rank() == 3 && b.rank() == 3, ErrorCode::kShapeMismatch,
          std::string(what) + ": feature maps must be (C,H,W)");
  require(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2), ErrorCode::kShapeMismatch,
          std::string(what) + ": spatial mismatch " + to_string(a.shape()) + " vs " +
              to_string(b.shape()));
}

Tensor tokens(const Tensor& x) { return ops::reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}); }

// softmax(q^T k * scale) over key positions, then values mixed by those weights.
std::pair<Tensor, Tensor> attend(const Tensor& q, const Tensor& k, const Tensor& v,
                                 double scale) {
  Tensor logits = ops::scale(ops::matmul(q, k, Transpose::kYes, Transpose::kNo), scale);
  Tensor weights = ops::softmax(logits, 1);
  Tensor mixed = ops::matmul(v, weights, Transpose::kNo, Transpose::kYes);
  return {mixed, weights};
}

}  // namespace

LafsResult lafs_forward(const Tensor& rgb, const Tensor& depth, const LAFSParams& params) {
  require_aligned(rgb, depth, "lafs_forward");
  const std::size_t c = rgb.dim(0) + depth.dim(0);
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  require(params.channel.reduce.in_channels() == c && params.spatial.reduce.in_channels() == c,
          ErrorCode::kShapeMismatch, "lafs_forward: parameters expect a different channel count");

  Tensor input = ops::concat_channels({rgb, depth});
  Tensor avg = ops::reshape(ops::adaptive_avg_pool_global(input), {c, 1});

  LafsResult r;
  r.channel_weights = ops::sigmoid(params.channel(avg));
  r.descriptor = params.spatial(avg);
  Tensor logits = ops::matmul(tokens(input), r.descriptor, Transpose::kYes, Transpose::kNo);
  logits = ops::scale(logits, 1.0 / static_cast<double>(c * c));
  r.spatial_weights = ops::reshape(ops::sigmoid(logits), {1, h, w});
  r.output = ops::scale_positions(ops::scale_channels(input, r.channel_weights), r.spatial_weights);
  return r;
}

CmaEmbedding cma_embed_shuffle(const Tensor& rgb, const Tensor& depth, const Tensor& fused,
                               const CMAParams& params) {
  require_aligned(rgb, depth, "cma_embed_shuffle");
  require_aligned(rgb, fused, "cma_embed_shuffle");
  const std::size_t ce = params.key_rgb.out_channels();
  require(ce % 4 == 0, ErrorCode::kConfig,
          "cma: embedding width " + std::to_string(ce) + " is not divisible by 4");
  require(params.value.out_channels() == 2 * ce, ErrorCode::kConfig,
          "cma: value projection must produce 2 * c_embed channels");

  Tensor key = ops::concat_channels({params.key_rgb(rgb), params.key_depth(depth)});
  Tensor query = ops::concat_channels({params.query_rgb(rgb), params.query_depth(depth)});
  key = tokens(ops::channel_shuffle(key, 2));
  query = tokens(ops::channel_shuffle(query, 2));
  Tensor value = tokens(params.value(fused));

  CmaEmbedding e;
  e.k1 = ops::slice_channels(key, 0, ce);
  e.k2 = ops::slice_channels(key, ce, 2 * ce);
  e.q1 = ops::slice_channels(query, 0, ce);
  e.q2 = ops::slice_channels(query, ce, 2 * ce);
  e.v1 = ops::slice_channels(value, 0, ce);
  e.v2 = ops::slice_channels(value, ce, 2 * ce);
  e.height = rgb.dim(1);
  e.width = rgb.dim(2);
  return e;
}

CmaResult cma_attend(const CmaEmbedding& e, const Tensor& fused_residual, const CMAParams& params,
                     double scale) {
  const std::size_t n = e.height * e.width;
  for (const Tensor* t : {&e.k1, &e.k2, &e.q1, &e.q2, &e.v1, &e.v2}) {
    require(t->rank() == 2 && t->dim(1) == n, ErrorCode::kShapeMismatch,
            "cma_attend: subspace tensors must have H*W columns");
  }
  require(fused_residual.rank() == 3 && fused_residual.dim(1) == e.height &&
              fused_residual.dim(2) == e.width,
          ErrorCode::kShapeMismatch, "cma_attend: residual spatial mismatch");
  require(params.out.out_channels() == fused_residual.dim(0), ErrorCode::kShapeMismatch,
          "cma_attend: output projection has " + std::to_string(params.out.out_channels()) +
              " channels but the residual has " + std::to_string(fused_residual.dim(0)));

  auto [mixed1, w1] = attend(e.q1, e.k1, e.v1, scale);
  auto [mixed2, w2] = attend(e.q2, e.k2, e.v2, scale);
  Tensor fused2 = ops::concat_channels({mixed1, mixed2});
  Tensor projected = ops::reshape(params.out(fused2), fused_residual.shape());
  return {ops::add(projected, fused_residual), w1, w2};
}

MhsaResult mhsa_forward(const Tensor& x, const MhsaParams& params) {
  require(x.rank() == 3, ErrorCode::kShapeMismatch, "mhsa_forward expects (C,H,W)");
  const std::size_t c = x.dim(0);
  require(params.heads >= 1 && c % params.heads == 0, ErrorCode::kConfig,
          "mhsa: heads must divide the channel count");
  const std::size_t head_dim = c / params.heads;
  Tensor t = tokens(x);
  Tensor q = params.query(t), k = params.key(t), v = params.value(t);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  MhsaResult r;
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < params.heads; ++h) {
    const std::size_t b = h * head_dim, e = b + head_dim;
    auto [mixed, weights] = attend(ops::slice_channels(q, b, e), ops::slice_channels(k, b, e),
                                   ops::slice_channels(v, b, e), scale);
    heads.push_back(mixed);
    r.weights.push_back(weights);
  }
  Tensor merged = params.out(ops::concat_channels(heads));
  r.output = ops::add(x, ops::reshape(merged, x.shape()));
  return r;
}

void FusionParams::collect(ParameterList& out, const std::string& prefix) const {
  if (se) se->collect(out, prefix + ".se");
  if (lafs) {
    lafs->channel.collect(out, prefix + ".lafs.channel");
    lafs->spatial.collect(out, prefix + ".lafs.spatial");
  }
  if (mhsa) {
    mhsa->query.collect(out, prefix + ".mhsa.query");
    mhsa->key.collect(out, prefix + ".mhsa.key");
    mhsa->value.collect(out, prefix + ".mhsa.value");
    mhsa->out.collect(out, prefix + ".mhsa.out");
  }
  if (cma) {
    cma->key_rgb.collect(out, prefix + ".cma.key_rgb");
    cma->query_rgb.collect(out, prefix + ".cma.query_rgb");
    cma->key_depth.collect(out, prefix + ".cma.key_depth");
    cma->query_depth.collect(out, prefix + ".cma.query_depth");
    cma->value.collect(out, prefix + ".cma.value");
    cma->out.collect(out, prefix + ".cma.out");
  }
  project.collect(out, prefix + ".project");
}

ParameterList FusionParams::parameters() const {
  ParameterList list;
  collect(list, "fusion");
  return list;
}

FusionParams make_fusion_params(const FusionBlockConfig& config, Initializer& init,
                                const FusionInit& options) {
  config.validate();
  const std::size_t c = config.c_fused;
  FusionParams p;
  p.config = config;
  p.project = Linear::make(c, config.c_out, init);
  auto attention_out = [&](std::size_t cin, std::size_t cout) {
    return options.zero_attention_output ? Linear::zero(cin, cout) : Linear::make(cin, cout, init);
  };
  switch (config.variant) {
    case FusionVariant::kCat:
      break;
    case FusionVariant::kSeMhsa:
      p.se = Bottleneck::make(c, config.se_hidden(), init);
      p.mhsa = MhsaParams{Linear::make(c, c, init), Linear::make(c, c, init),
                          Linear::make(c, c, init), attention_out(c, c), config.mhsa_heads};
      break;
    case FusionVariant::kLafs:
    case FusionVariant::kCma:
    case FusionVariant::kLafsCma:
      if (uses_lafs(config.variant)) {
        p.lafs = LAFSParams{Bottleneck::make(c, config.se_hidden(), init),
                            Bottleneck::make(c, config.se_hidden(), init)};
      }
      if (uses_cma(config.variant)) {
        const std::size_t ce = config.c_embed;
        CMAParams cma;
        cma.key_rgb = Linear::make(config.c_rgb, ce, init);
        cma.query_rgb = Linear::make(config.c_rgb, ce, init);
        cma.key_depth = Linear::make(config.c_depth, ce, init);
        cma.query_depth = Linear::make(config.c_depth, ce, init);
        cma.value = Linear::make(c, 2 * ce, init);
        cma.out = attention_out(2 * ce, c);
        p.cma = std::move(cma);
      }
      break;
  }
  return p;
}

FusionOutput fusion_forward(const Tensor& rgb, const Tensor& depth, const FusionParams& params) {
  require_aligned(rgb, depth, "fusion_forward");
  require(rgb.dim(0) == params.config.c_rgb && depth.dim(0) == params.config.c_depth,
          ErrorCode::kShapeMismatch,
          "fusion_forward: expected " + std::to_string(params.config.c_rgb) + "+" +
              std::to_string(params.config.c_depth) + " channels, got " + to_string(rgb.shape()) +
              " and " + to_string(depth.shape()));
  const FusionVariant v = params.config.variant;
  if (v == FusionVariant::kCat || v == FusionVariant::kSeMhsa) {
    return {baseline_fusion(rgb, depth, params), Tensor()};
  }
  FusionOutput out;
  Tensor selected;
  if (uses_lafs(v)) {
    LafsResult lafs = lafs_forward(rgb, depth, *params.lafs);
    selected = lafs.output;
    out.spatial_weights = lafs.spatial_weights;
  } else {
    selected = ops::concat_channels({rgb, depth});
  }
  if (uses_cma(v)) {
    CmaEmbedding e = cma_embed_shuffle(rgb, depth, selected, *params.cma);
    selected = cma_attend(e, selected, *params.cma, params.config.cma_scale()).output;
  }
  out.output = params.project(selected);
  return out;
}

Tensor baseline_fusion(const Tensor& rgb, const Tensor& depth, const FusionParams& params) {
  require_aligned(rgb, depth, "baseline_fusion");
  Tensor input = ops::concat_channels({rgb, depth});
  switch (params.config.variant) {
    case FusionVariant::kCat:
      return params.project(input);
    case FusionVariant::kSeMhsa: {
      const std::size_t c = input.dim(0);
      Tensor avg = ops::reshape(ops::adaptive_avg_pool_global(input), {c, 1});
      Tensor selected = ops::scale_channels(input, ops::sigmoid((*params.se)(avg)));
      return params.project(mhsa_forward(selected, *params.mhsa).output);
    }
    default:
      fail(ErrorCode::kInvalidArgument,
           "baseline_fusion: variant " + std::string(to_string(params.config.variant)) +
               " is not a baseline");
  }
}

}  // namespace asymfuse
