// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "asymfuse/tensor.hpp"

namespace asymfuse {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Min-max bounds used to map a real-valued map onto 0..255.
struct Normalization {
  double min = 0.0;
  double max = 0.0;
  /// max - min too small to scale; every pixel is written as 128.
  bool degenerate = false;
};

Normalization normalization_for(std::span<const double> values);
GrayImage quantize(std::span<const double> values, std::size_t height, std::size_t width,
                   const Normalization& norm);
double dequantize(std::uint8_t pixel, const Normalization& norm);

/// Binary P5, maxval 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Binary P6 from a (3,H,W) tensor with values in [0,1] (clamped).
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);

void write_normalization(const std::filesystem::path& path, const Normalization& norm);
Normalization read_normalization(const std::filesystem::path& path);

}  // namespace asymfuse
