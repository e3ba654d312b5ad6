// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "asymfuse/error.hpp"
#include "asymfuse/layers.hpp"
#include "asymfuse/ops.hpp"

namespace asymfuse {
namespace {

constexpr std::uint64_t kSceneStream = 0x5ce4e;
constexpr std::uint64_t kAugmentStream = 0xa5635;

struct Shape2D {
  bool disk = false;
  double cy = 0, cx = 0, radius = 0;
  std::size_t top = 0, left = 0, bottom = 0, right = 0;  // half-open
  std::uint8_t cls = 0;
  double depth = 0;
  bool covers(std::size_t y, std::size_t x) const {
    if (disk) {
      const double dy = static_cast<double>(y) + 0.5 - cy;
      const double dx = static_cast<double>(x) + 0.5 - cx;
      return dy * dy + dx * dx <= radius * radius;
    }
    return y >= top && y < bottom && x >= left && x < right;
  }
};

}  // namespace

bool same_sample(const Sample& a, const Sample& b) {
  auto eq = [](const Tensor& x, const Tensor& y) {
    return x.shape() == y.shape() &&
           std::equal(x.values().begin(), x.values().end(), y.values().begin());
  };
  return a.num_classes == b.num_classes && a.labels == b.labels && eq(a.rgb, b.rgb) &&
         eq(a.depth, b.depth);
}

void SceneSpec::validate() const {
  require(num_classes >= 2 && num_classes <= 6, ErrorCode::kConfig,
          "scene num_classes must be in [2, 6]");
  require(height >= 4 && width >= 4, ErrorCode::kConfig, "scene size too small");
  require(min_shapes <= max_shapes, ErrorCode::kConfig, "min_shapes exceeds max_shapes");
  require(depth_noise >= 0.0 && color_noise >= 0.0, ErrorCode::kConfig, "noise must be >= 0");
}

ClassAppearance SceneSpec::appearance(std::size_t cls) {
  static constexpr std::array<double, 3> kWall{0.45, 0.45, 0.45};
  static constexpr std::array<double, 3> kRed{0.80, 0.25, 0.20};
  static constexpr std::array<double, 3> kBlue{0.20, 0.35, 0.80};
  static constexpr std::array<double, 3> kGreen{0.25, 0.70, 0.30};
  switch (cls) {
    case 0: return {kWall, 0.85, 0.95};
    case 1: return {kRed, 0.15, 0.30};
    case 2: return {kRed, 0.55, 0.70};
    case 3: return {kBlue, 0.15, 0.30};
    case 4: return {kBlue, 0.55, 0.70};
    case 5: return {kGreen, 0.35, 0.50};
    default: fail(ErrorCode::kInvalidArgument, "no appearance for class " + std::to_string(cls));
  }
}

Sample generate_sample(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(seed, kSceneStream));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t h = spec.height, w = spec.width;
  const double size = static_cast<double>(std::min(h, w));

  std::vector<Shape2D> shapes;
  if (!spec.background_only) {
    const std::size_t count = pick(spec.min_shapes, spec.max_shapes);
    for (std::size_t i = 0; i < count; ++i) {
      Shape2D s;
      s.cls = static_cast<std::uint8_t>(pick(1, spec.num_classes - 1));
      const ClassAppearance a = SceneSpec::appearance(s.cls);
      s.depth = uniform(a.depth_lo, a.depth_hi);
      s.disk = pick(0, 1) == 1;
      if (s.disk) {
        s.radius = uniform(size / 12.0, size / 5.0);
        s.cy = uniform(0.0, static_cast<double>(h));
        s.cx = uniform(0.0, static_cast<double>(w));
      } else {
        const auto sh = static_cast<std::size_t>(uniform(size / 6.0, size / 2.5));
        const auto sw = static_cast<std::size_t>(uniform(size / 6.0, size / 2.5));
        s.top = pick(0, h - std::min(sh, h));
        s.left = pick(0, w - std::min(sw, w));
        s.bottom = std::min(h, s.top + sh);
        s.right = std::min(w, s.left + sw);
      }
      shapes.push_back(s);
    }
  }

  const ClassAppearance wall = SceneSpec::appearance(0);
  const double wall_depth = uniform(wall.depth_lo, wall.depth_hi);
  std::normal_distribution<double> depth_noise(0.0, spec.depth_noise);
  std::normal_distribution<double> color_noise(0.0, spec.color_noise);
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };

  Sample s;
  s.num_classes = spec.num_classes;
  s.labels = {h, w, std::vector<std::uint8_t>(h * w, 0)};
  std::vector<double> rgb(3 * h * w), depth(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::uint8_t cls = 0;
      double z = wall_depth;
      for (const Shape2D& shape : shapes) {
        if (shape.depth < z && shape.covers(y, x)) {
          z = shape.depth;
          cls = shape.cls;
        }
      }
      const std::size_t p = y * w + x;
      s.labels.values[p] = cls;
      depth[p] = clamp01(z + (spec.depth_noise > 0 ? depth_noise(rng) : 0.0));
      const ClassAppearance a = SceneSpec::appearance(cls);
      for (std::size_t c = 0; c < 3; ++c) {
        rgb[c * h * w + p] = clamp01(a.color[c] + (spec.color_noise > 0 ? color_noise(rng) : 0.0));
      }
    }
  }
  s.rgb = Tensor({3, h, w}, std::move(rgb));
  s.depth = Tensor({1, h, w}, std::move(depth));
  return s;
}

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.flip_probability = 0.0;
  p.scale_min = p.scale_max = 1.0;
  p.hsv = false;
  return p;
}

Sample flip_horizontal(const Sample& s) {
  auto flip = [](const Tensor& t) {
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    auto in = t.values();
    std::vector<double> out(in.size());
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out[(k * h + y) * w + x] = in[(k * h + y) * w + (w - 1 - x)];
    return Tensor(t.shape(), std::move(out));
  };
  Sample r = s;
  r.rgb = flip(s.rgb);
  r.depth = flip(s.depth);
  for (std::size_t y = 0; y < s.labels.height; ++y)
    for (std::size_t x = 0; x < s.labels.width; ++x)
      r.labels.values[y * s.labels.width + x] = s.labels.at(y, s.labels.width - 1 - x);
  return r;
}

Sample rescale(const Sample& s, std::size_t height, std::size_t width) {
  NoGradGuard no_grad;
  Sample r;
  r.num_classes = s.num_classes;
  r.rgb = ops::bilinear_resize(s.rgb, height, width);
  r.depth = ops::bilinear_resize(s.depth, height, width);
  r.labels = {height, width, std::vector<std::uint8_t>(height * width)};
  const double sy = static_cast<double>(s.labels.height) / static_cast<double>(height);
  const double sx = static_cast<double>(s.labels.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto iy = std::min(static_cast<std::size_t>((static_cast<double>(y) + 0.5) * sy),
                             s.labels.height - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const auto ix = std::min(static_cast<std::size_t>((static_cast<double>(x) + 0.5) * sx),
                               s.labels.width - 1);
      r.labels.values[y * width + x] = s.labels.at(iy, ix);
    }
  }
  return r;
}

Sample crop(const Sample& s, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width) {
  require(top + height <= s.labels.height && left + width <= s.labels.width,
          ErrorCode::kInvalidArgument,
          "crop " + std::to_string(height) + "x" + std::to_string(width) + " exceeds image " +
              std::to_string(s.labels.height) + "x" + std::to_string(s.labels.width));
  auto cut = [&](const Tensor& t) {
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    auto in = t.values();
    std::vector<double> out(c * height * width);
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
          out[(k * height + y) * width + x] = in[(k * h + top + y) * w + left + x];
    return Tensor({c, height, width}, std::move(out));
  };
  Sample r;
  r.num_classes = s.num_classes;
  r.rgb = cut(s.rgb);
  r.depth = cut(s.depth);
  r.labels = {height, width, std::vector<std::uint8_t>(height * width)};
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      r.labels.values[y * width + x] = s.labels.at(top + y, left + x);
  return r;
}

Tensor jitter_hsv(const Tensor& rgb, double hue_shift, double saturation_gain,
                  double value_gain) {
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  auto in = rgb.values();
  std::vector<double> out(in.size());
  for (std::size_t p = 0; p < plane; ++p) {
    const double r = in[p], g = in[plane + p], b = in[2 * plane + p];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    double hue = 0.0;
    if (delta > 0.0) {
      if (mx == r) {
        hue = std::fmod((g - b) / delta, 6.0);
      } else if (mx == g) {
        hue = (b - r) / delta + 2.0;
      } else {
        hue = (r - g) / delta + 4.0;
      }
      hue /= 6.0;
    }
    double sat = mx > 0.0 ? delta / mx : 0.0;
    double val = mx;
    hue = hue + hue_shift;
    hue -= std::floor(hue);
    sat = std::clamp(sat * saturation_gain, 0.0, 1.0);
    val = std::clamp(val * value_gain, 0.0, 1.0);

    const double h6 = hue * 6.0;
    const double sector = std::floor(h6);
    const double f = h6 - sector;
    const double pv = val * (1.0 - sat);
    const double qv = val * (1.0 - sat * f);
    const double tv = val * (1.0 - sat * (1.0 - f));
    double ro, go, bo;
    switch (static_cast<int>(sector) % 6) {
      case 0: ro = val; go = tv; bo = pv; break;
      case 1: ro = qv; go = val; bo = pv; break;
      case 2: ro = pv; go = val; bo = tv; break;
      case 3: ro = pv; go = qv; bo = val; break;
      case 4: ro = tv; go = pv; bo = val; break;
      default: ro = val; go = pv; bo = qv; break;
    }
    out[p] = std::clamp(ro, 0.0, 1.0);
    out[plane + p] = std::clamp(go, 0.0, 1.0);
    out[2 * plane + p] = std::clamp(bo, 0.0, 1.0);
  }
  return Tensor(rgb.shape(), std::move(out));
}

Sample augment_sample(const Sample& s, std::uint64_t seed, const AugmentPolicy& policy) {
  require(policy.scale_min > 0.0 && policy.scale_min <= policy.scale_max,
          ErrorCode::kInvalidArgument, "augment: bad scale range");
  std::mt19937_64 rng(derive_seed(seed, kAugmentStream));
  auto uniform = [&](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const std::size_t h = s.labels.height, w = s.labels.width;
  const std::size_t crop_h = policy.crop_height ? policy.crop_height : h;
  const std::size_t crop_w = policy.crop_width ? policy.crop_width : w;

  Sample r = s;
  if (uniform(0.0, 1.0) < policy.flip_probability) r = flip_horizontal(r);

  const double factor = uniform(policy.scale_min, policy.scale_max);
  const auto sh = static_cast<std::size_t>(std::lround(static_cast<double>(h) * factor));
  const auto sw = static_cast<std::size_t>(std::lround(static_cast<double>(w) * factor));
  require(crop_h <= sh && crop_w <= sw, ErrorCode::kInvalidArgument,
          "augment: crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
              " larger than scaled image " + std::to_string(sh) + "x" + std::to_string(sw));
  if (sh != h || sw != w) r = rescale(r, sh, sw);

  const auto top = static_cast<std::size_t>(uniform(0.0, static_cast<double>(sh - crop_h + 1)));
  const auto left = static_cast<std::size_t>(uniform(0.0, static_cast<double>(sw - crop_w + 1)));
  if (crop_h != sh || crop_w != sw) {
    r = crop(r, std::min(top, sh - crop_h), std::min(left, sw - crop_w), crop_h, crop_w);
  }

  if (policy.hsv) {
    const double dh = uniform(-policy.hue, policy.hue);
    const double gs = 1.0 + uniform(-policy.saturation, policy.saturation);
    const double gv = 1.0 + uniform(-policy.value, policy.value);
    r.rgb = jitter_hsv(r.rgb, dh, gs, gv);
  }
  return r;
}

}  // namespace asymfuse
