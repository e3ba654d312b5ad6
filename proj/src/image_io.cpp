// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "asymfuse/error.hpp"
#include "json.hpp"

namespace asymfuse {
namespace {

constexpr double kDegenerateRange = 1e-12;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.is_open(), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  return out;
}

// Skips whitespace and '#' comments between PNM header fields.
std::size_t read_header_int(std::istream& in, const std::filesystem::path& path) {
  int ch = in.peek();
  while (ch != EOF && (std::isspace(ch) || ch == '#')) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    ch = in.peek();
  }
  std::size_t v = 0;
  in >> v;
  require(!in.fail(), ErrorCode::kFormat, path.string() + ": malformed PGM header");
  return v;
}

}  // namespace

Normalization normalization_for(std::span<const double> values) {
  require(!values.empty(), ErrorCode::kInvalidArgument, "cannot normalize an empty map");
  Normalization n;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  n.min = *lo;
  n.max = *hi;
  require(std::isfinite(n.min) && std::isfinite(n.max), ErrorCode::kNonFinite,
          "attention map has non-finite values");
  n.degenerate = n.max - n.min <= kDegenerateRange * std::max(1.0, std::abs(n.max));
  return n;
}

GrayImage quantize(std::span<const double> values, std::size_t height, std::size_t width,
                   const Normalization& norm) {
  require(values.size() == height * width, ErrorCode::kShapeMismatch,
          "quantize: value count does not match image size");
  GrayImage img{height, width, std::vector<std::uint8_t>(values.size(), 128)};
  if (norm.degenerate) return img;
  const double range = norm.max - norm.min;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = std::clamp((values[i] - norm.min) / range, 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return img;
}

double dequantize(std::uint8_t pixel, const Normalization& norm) {
  if (norm.degenerate) return norm.min;
  return norm.min + (norm.max - norm.min) * static_cast<double>(pixel) / 255.0;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  require(image.pixels.size() == image.height * image.width, ErrorCode::kShapeMismatch,
          "write_pgm: pixel count does not match image size");
  auto out = open_out(path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  require(out.good(), ErrorCode::kIo, "failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::kIo, "cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  require(in.gcount() == 2 && magic[0] == 'P' && magic[1] == '5', ErrorCode::kFormat,
          path.string() + ": not a binary PGM");
  GrayImage img;
  img.width = read_header_int(in, path);
  img.height = read_header_int(in, path);
  const std::size_t maxval = read_header_int(in, path);
  require(maxval == 255, ErrorCode::kFormat, path.string() + ": only 8-bit PGM is supported");
  in.get();
  img.pixels.resize(img.height * img.width);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  require(in.gcount() == static_cast<std::streamsize>(img.pixels.size()), ErrorCode::kTruncated,
          path.string() + ": truncated PGM payload");
  return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  require(rgb.rank() == 3 && rgb.dim(0) == 3, ErrorCode::kShapeMismatch,
          "write_ppm expects (3,H,W)");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2), hw = h * w;
  auto v = rgb.values();
  std::vector<std::uint8_t> bytes(3 * hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      bytes[3 * p + c] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v[c * hw + p], 0.0, 1.0) * 255.0));
  auto out = open_out(path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::kIo, "failed writing " + path.string());
}

void write_normalization(const std::filesystem::path& path, const Normalization& norm) {
  nlohmann::ordered_json j;
  j["min"] = norm.min;
  j["max"] = norm.max;
  j["degenerate"] = norm.degenerate;
  std::ofstream out(path);
  require(out.is_open(), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

Normalization read_normalization(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.is_open(), ErrorCode::kIo, "cannot open " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    return {j.at("min").get<double>(), j.at("max").get<double>(), j.at("degenerate").get<bool>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

}  // namespace asymfuse
