// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/network.hpp"

#include <cmath>

#include "asymfuse/error.hpp"
#include "asymfuse/ops.hpp"
#include "json.hpp"

namespace asymfuse {

using ops::Transpose;

namespace {

constexpr std::uint64_t kRgbStream = 1;
constexpr std::uint64_t kDepthStream = 2;
constexpr std::uint64_t kDecoderStream = 3;
constexpr std::uint64_t kFusionStream = 100;

std::vector<FusionBlockConfig> fusion_sites(const ModelConfig& c, FusionVariant v,
                                            std::size_t se_reduction) {
  std::vector<FusionBlockConfig> sites;
  for (std::size_t i = 0; i < c.num_stages; ++i) {
    sites.push_back(FusionBlockConfig::for_widths(c.rgb_widths.at(i), c.depth_widths.at(i), v,
                                                  se_reduction));
  }
  return sites;
}

}  // namespace

ModelConfig ModelConfig::make_default(FusionVariant variant) {
  ModelConfig c;
  c.fusion = fusion_sites(c, variant, 4);
  return c;
}

ModelConfig ModelConfig::micro(FusionVariant variant) {
  ModelConfig c;
  c.rgb_widths = {6, 8, 12, 16};
  c.depth_widths = {4, 4, 8, 8};
  c.decoder_embed = 6;
  c.num_classes = 3;
  c.input_height = 16;
  c.input_width = 16;
  c.fusion = fusion_sites(c, variant, 2);
  return c;
}

void ModelConfig::set_variant(FusionVariant variant) {
  const std::size_t r = fusion.empty() ? 4 : fusion.front().se_reduction;
  fusion = fusion_sites(*this, variant, r);
}

FusionVariant ModelConfig::variant() const {
  require(!fusion.empty(), ErrorCode::kConfig, "model has no fusion sites");
  return fusion.front().variant;
}

void ModelConfig::validate() const {
  require(num_stages >= 1, ErrorCode::kConfig, "num_stages must be positive");
  require(rgb_widths.size() == num_stages && depth_widths.size() == num_stages &&
              fusion.size() == num_stages,
          ErrorCode::kConfig, "per-stage lists must have num_stages entries");
  for (std::size_t i = 0; i < num_stages; ++i) {
    require(depth_widths[i] > 0 && depth_widths[i] < rgb_widths[i], ErrorCode::kConfig,
            "stage " + std::to_string(i) + ": depth width must be positive and below rgb width");
    const FusionBlockConfig& f = fusion[i];
    f.validate();
    require(f.c_rgb == rgb_widths[i] && f.c_depth == depth_widths[i], ErrorCode::kConfig,
            "stage " + std::to_string(i) + ": fusion widths disagree with encoder widths");
    require(f.variant == fusion.front().variant, ErrorCode::kConfig,
            "all fusion sites must use the same variant");
  }
  require(decoder_embed > 0 && num_classes > 0, ErrorCode::kConfig,
          "decoder_embed and num_classes must be positive");
  require(input_height % stride() == 0 && input_width % stride() == 0 && input_height > 0 &&
              input_width > 0,
          ErrorCode::kConfig, "input size must be divisible by 2^num_stages");
  require(depth_ffn_ratio >= 1, ErrorCode::kConfig, "depth_ffn_ratio must be positive");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["rgb_widths"] = rgb_widths;
  j["depth_widths"] = depth_widths;
  j["num_stages"] = num_stages;
  nlohmann::ordered_json sites = nlohmann::ordered_json::array();
  for (const auto& f : fusion) {
    nlohmann::ordered_json s;
    s["c_rgb"] = f.c_rgb;
    s["c_depth"] = f.c_depth;
    s["c_fused"] = f.c_fused;
    s["c_embed"] = f.c_embed;
    s["c_out"] = f.c_out;
    s["se_reduction"] = f.se_reduction;
    s["mhsa_heads"] = f.mhsa_heads;
    s["variant"] = std::string(asymfuse::to_string(f.variant));
    if (f.attention_scale) s["attention_scale"] = *f.attention_scale;
    sites.push_back(s);
  }
  j["fusion"] = sites;
  j["decoder_embed"] = decoder_embed;
  j["num_classes"] = num_classes;
  j["input_size"] = {input_height, input_width};
  j["depth_ffn_ratio"] = depth_ffn_ratio;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("model config is not valid JSON: ") + e.what());
  }
  try {
    ModelConfig c;
    c.rgb_widths = j.value("rgb_widths", c.rgb_widths);
    c.depth_widths = j.value("depth_widths", c.depth_widths);
    c.num_stages = j.value("num_stages", c.rgb_widths.size());
    c.decoder_embed = j.value("decoder_embed", c.decoder_embed);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.depth_ffn_ratio = j.value("depth_ffn_ratio", c.depth_ffn_ratio);
    if (j.contains("input_size")) {
      c.input_height = j["input_size"].at(0).get<std::size_t>();
      c.input_width = j["input_size"].at(1).get<std::size_t>();
    }
    const auto& fusion = j.contains("fusion") ? j["fusion"] : nlohmann::json();
    if (fusion.is_array()) {
      for (const auto& s : fusion) {
        FusionBlockConfig f;
        f.c_rgb = s.at("c_rgb").get<std::size_t>();
        f.c_depth = s.at("c_depth").get<std::size_t>();
        f.c_fused = s.value("c_fused", f.c_rgb + f.c_depth);
        f.c_embed = s.value("c_embed", (f.c_rgb + 3) / 4 * 4);
        f.c_out = s.value("c_out", f.c_fused);
        f.se_reduction = s.value("se_reduction", f.se_reduction);
        f.mhsa_heads = s.value("mhsa_heads", f.mhsa_heads);
        f.variant = parse_variant(s.value("variant", std::string("LAFS_CMA")));
        if (s.contains("attention_scale")) f.attention_scale = s["attention_scale"].get<double>();
        c.fusion.push_back(f);
      }
    } else {
      // Shorthand: {"variant": "...", "se_reduction": r} at the top level.
      const FusionVariant v = parse_variant(j.value("variant", std::string("LAFS_CMA")));
      c.fusion = fusion_sites(c, v, j.value("se_reduction", std::size_t{4}));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad model config: ") + e.what());
  }
}

std::vector<std::pair<std::string, ParameterList>> SegmentationModel::blocks() const {
  std::vector<std::pair<std::string, ParameterList>> out;
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    ParameterList p;
    const std::string s = "rgb." + std::to_string(i);
    rgb[i].down.collect(p, s + ".down");
    rgb[i].norm.collect(p, s + ".norm");
    rgb[i].residual.collect(p, s + ".residual");
    out.emplace_back(s, std::move(p));
  }
  for (std::size_t i = 0; i < depth.size(); ++i) {
    ParameterList p;
    const std::string s = "depth." + std::to_string(i);
    const DepthStage& d = depth[i];
    d.embed.collect(p, s + ".embed");
    d.attn_norm.collect(p, s + ".attn_norm");
    d.query.collect(p, s + ".query");
    d.key.collect(p, s + ".key");
    d.value.collect(p, s + ".value");
    d.out.collect(p, s + ".out");
    d.ffn_norm.collect(p, s + ".ffn_norm");
    d.ffn_in.collect(p, s + ".ffn_in");
    d.ffn_out.collect(p, s + ".ffn_out");
    out.emplace_back(s, std::move(p));
  }
  for (std::size_t i = 0; i < fusion.size(); ++i) {
    ParameterList p;
    const std::string s = "fusion." + std::to_string(i);
    fusion[i].collect(p, s);
    out.emplace_back(s, std::move(p));
  }
  ParameterList p;
  for (std::size_t i = 0; i < decoder.embed.size(); ++i) {
    decoder.embed[i].collect(p, "decoder.embed." + std::to_string(i));
  }
  decoder.fuse.collect(p, "decoder.fuse");
  decoder.classify.collect(p, "decoder.classify");
  out.emplace_back("decoder", std::move(p));
  return out;
}

namespace {

ParameterList gather(const SegmentationModel& m, std::string_view prefix) {
  ParameterList list;
  for (const auto& [name, params] : m.blocks()) {
    if (prefix.empty() || name.starts_with(prefix)) list.append(params);
  }
  return list;
}

}  // namespace

ParameterList SegmentationModel::parameters() const { return gather(*this, ""); }
ParameterList SegmentationModel::rgb_parameters() const { return gather(*this, "rgb."); }
ParameterList SegmentationModel::depth_parameters() const { return gather(*this, "depth."); }
ParameterList SegmentationModel::fusion_parameters() const { return gather(*this, "fusion."); }
ParameterList SegmentationModel::decoder_parameters() const { return gather(*this, "decoder"); }

SegmentationModel build_model(const ModelConfig& config, std::uint64_t seed,
                              const ModelInit& init) {
  config.validate();
  SegmentationModel m;
  m.config = config;

  Initializer rgb_init(derive_seed(seed, kRgbStream));
  std::size_t cin = 3;
  for (std::size_t i = 0; i < config.num_stages; ++i) {
    const std::size_t c = config.rgb_widths[i];
    RgbStage s;
    s.down = Conv::make(cin, c, 3, 2, 1, rgb_init);
    s.norm = Norm::make(c);
    s.residual = Conv::make(c, c, 3, 1, 1, rgb_init);
    m.rgb.push_back(std::move(s));
    cin = c;
  }

  Initializer depth_init(derive_seed(seed, kDepthStream));
  cin = 1;
  for (std::size_t i = 0; i < config.num_stages; ++i) {
    const std::size_t d = config.depth_widths[i];
    DepthStage s;
    s.embed = Conv::make(cin, d, 3, 2, 1, depth_init);
    s.attn_norm = Norm::make(d);
    s.query = Linear::make(d, d, depth_init);
    s.key = Linear::make(d, d, depth_init);
    s.value = Linear::make(d, d, depth_init);
    s.out = Linear::make(d, d, depth_init);
    s.ffn_norm = Norm::make(d);
    s.ffn_in = Linear::make(d, d * config.depth_ffn_ratio, depth_init);
    s.ffn_out = Linear::make(d * config.depth_ffn_ratio, d, depth_init);
    m.depth.push_back(std::move(s));
    cin = d;
  }

  for (std::size_t i = 0; i < config.num_stages; ++i) {
    Initializer fusion_init(derive_seed(seed, kFusionStream + i));
    m.fusion.push_back(make_fusion_params(config.fusion[i], fusion_init, init.fusion));
  }

  Initializer dec_init(derive_seed(seed, kDecoderStream));
  for (std::size_t i = 0; i < config.num_stages; ++i) {
    m.decoder.embed.push_back(Linear::make(config.fusion[i].c_out, config.decoder_embed, dec_init));
  }
  m.decoder.fuse =
      Linear::make(config.num_stages * config.decoder_embed, config.decoder_embed, dec_init);
  m.decoder.classify = Linear::make(config.decoder_embed, config.num_classes, dec_init);
  return m;
}

namespace {

void require_input(const Tensor& x, std::size_t channels, const ModelConfig& c, const char* what) {
  require(x.rank() == 3 && x.dim(0) == channels, ErrorCode::kShapeMismatch,
          std::string(what) + ": expected " + std::to_string(channels) +
              " input channels, got shape " + to_string(x.shape()));
  require(x.dim(1) % c.stride() == 0 && x.dim(2) % c.stride() == 0, ErrorCode::kShapeMismatch,
          std::string(what) + ": input size " + to_string(x.shape()) + " not divisible by " +
              std::to_string(c.stride()));
}

}  // namespace

std::vector<Tensor> encode_rgb(const Tensor& image, const SegmentationModel& model) {
  require_input(image, 3, model.config, "encode_rgb");
  std::vector<Tensor> stages;
  Tensor x = image;
  for (const RgbStage& s : model.rgb) {
    Tensor h = ops::gelu(s.norm(s.down(x)));
    x = ops::add(h, s.residual(h));
    stages.push_back(x);
  }
  return stages;
}

TokenAttention depth_attention(const Tensor& tokens, const DepthStage& stage) {
  Tensor normed = stage.attn_norm(tokens);
  Tensor q = stage.query(normed), k = stage.key(normed), v = stage.value(normed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(tokens.dim(0)));
  Tensor logits = ops::scale(ops::matmul(q, k, Transpose::kYes, Transpose::kNo), scale);
  Tensor weights = ops::softmax(logits, 1);
  Tensor mixed = ops::matmul(v, weights, Transpose::kNo, Transpose::kYes);
  return {ops::add(tokens, stage.out(mixed)), weights};
}

std::vector<Tensor> encode_depth(const Tensor& depth, const SegmentationModel& model) {
  require_input(depth, 1, model.config, "encode_depth");
  std::vector<Tensor> stages;
  Tensor x = depth;
  for (const DepthStage& s : model.depth) {
    Tensor e = s.embed(x);
    const Shape shape = e.shape();
    Tensor t = ops::reshape(e, {shape[0], shape[1] * shape[2]});
    t = depth_attention(t, s).output;
    t = ops::add(t, s.ffn_out(ops::gelu(s.ffn_in(s.ffn_norm(t)))));
    x = ops::reshape(t, shape);
    stages.push_back(x);
  }
  return stages;
}

ForwardResult model_forward(const Tensor& rgb, const Tensor& depth, const SegmentationModel& model,
                            FusionVariant variant) {
  require(variant == model.config.variant(), ErrorCode::kConfig,
          "model was built for variant " + std::string(to_string(model.config.variant())) +
              ", asked to run " + std::string(to_string(variant)));
  require(rgb.rank() == 3 && depth.rank() == 3 && rgb.dim(1) == depth.dim(1) &&
              rgb.dim(2) == depth.dim(2),
          ErrorCode::kShapeMismatch, "model_forward: rgb and depth are not aligned");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  std::vector<Tensor> rgb_feats = encode_rgb(rgb, model);
  std::vector<Tensor> depth_feats = encode_depth(depth, model);

  ForwardResult r;
  std::vector<Tensor> embedded;
  for (std::size_t i = 0; i < model.config.num_stages; ++i) {
    FusionOutput f = fusion_forward(rgb_feats[i], depth_feats[i], model.fusion[i]);
    r.fused.push_back(f.output);
    r.spatial_attention.push_back(f.spatial_weights);
    Tensor e = model.decoder.embed[i](f.output);
    embedded.push_back(ops::bilinear_resize(e, h / 4, w / 4));
  }
  Tensor merged = ops::gelu(model.decoder.fuse(ops::concat_channels(embedded)));
  r.logits = ops::bilinear_resize(model.decoder.classify(merged), h, w);
  return r;
}

Tensor multi_scale_infer(const Tensor& rgb, const Tensor& depth, const SegmentationModel& model,
                         const std::vector<double>& scales) {
  require(!scales.empty(), ErrorCode::kInvalidArgument, "multi_scale_infer: no scales given");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  const std::size_t stride = model.config.stride();
  std::vector<double> total;
  Shape shape;
  for (double s : scales) {
    require(std::isfinite(s) && s > 0.0, ErrorCode::kInvalidArgument,
            "multi_scale_infer: scale must be positive");
    const auto sh = static_cast<std::size_t>(std::lround(static_cast<double>(h) * s));
    const auto sw = static_cast<std::size_t>(std::lround(static_cast<double>(w) * s));
    require(sh > 0 && sw > 0 && sh % stride == 0 && sw % stride == 0,
            ErrorCode::kInvalidArgument,
            "multi_scale_infer: scale " + std::to_string(s) + " gives " + std::to_string(sh) + "x" +
                std::to_string(sw) + ", not divisible by " + std::to_string(stride));
    Tensor logits;
    if (sh == h && sw == w) {
      logits = model_forward(rgb, depth, model).logits;
    } else {
      Tensor r = ops::bilinear_resize(rgb, sh, sw);
      Tensor d = ops::bilinear_resize(depth, sh, sw);
      logits = ops::bilinear_resize(model_forward(r, d, model).logits, h, w);
    }
    if (total.empty()) {
      total.assign(logits.values().begin(), logits.values().end());
      shape = logits.shape();
    } else {
      auto v = logits.values();
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += v[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(scales.size());
  for (double& v : total) v *= inv;
  return Tensor(std::move(shape), std::move(total));
}

}  // namespace asymfuse
