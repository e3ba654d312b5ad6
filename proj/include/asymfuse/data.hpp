// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "asymfuse/tensor.hpp"

namespace asymfuse {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct LabelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;  // row-major

  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  bool operator==(const LabelGrid&) const = default;
};

struct Sample {
  Tensor rgb;    // (3,H,W) in [0,1]
  Tensor depth;  // (1,H,W) in [0,1]
  LabelGrid labels;
  std::size_t num_classes = 0;
};

bool same_sample(const Sample& a, const Sample& b);

struct ClassAppearance {
  std::array<double, 3> color;
  double depth_lo;
  double depth_hi;
};

/// Scene recipe. Classes 1/2 and 3/4 share a color and differ only in depth
/// band; classes 1/3 and 2/4 share a depth band and differ only in color.
/// Class 0 is the background wall.
struct SceneSpec {
  std::size_t num_classes = 6;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_shapes = 3;
  std::size_t max_shapes = 6;
  double depth_noise = 0.01;
  double color_noise = 0.02;
  bool background_only = false;

  void validate() const;
  static ClassAppearance appearance(std::size_t cls);
};

/// Pure in (seed, spec).
Sample generate_sample(std::uint64_t seed, const SceneSpec& spec);

struct AugmentPolicy {
  double flip_probability = 0.5;
  double scale_min = 1.0;
  double scale_max = 2.0;
  std::size_t crop_height = 0;  // 0: keep the input size
  std::size_t crop_width = 0;
  bool hsv = true;
  double hue = 0.02;
  double saturation = 0.2;
  double value = 0.2;

  /// No flip, unit scale, full crop, no jitter.
  static AugmentPolicy identity();
};

Sample flip_horizontal(const Sample& s);
/// Bilinear for rgb/depth, nearest for labels.
Sample rescale(const Sample& s, std::size_t height, std::size_t width);
Sample crop(const Sample& s, std::size_t top, std::size_t left, std::size_t height,
            std::size_t width);
Tensor jitter_hsv(const Tensor& rgb, double hue_shift, double saturation_gain, double value_gain);
/// Pure in (sample, seed, policy).
Sample augment_sample(const Sample& s, std::uint64_t seed, const AugmentPolicy& policy);

// ASMP layout: "ASMP", u8 version (1), u32 H, u32 W, u32 num_classes, rgb and
// depth as embedded ATSR tensors, then H*W label bytes.
inline constexpr std::uint8_t kSampleVersion = 1;

void write_sample(std::ostream& out, const Sample& s);
Sample read_sample(std::istream& in);
void write_sample(const std::filesystem::path& path, const Sample& s);
Sample read_sample(const std::filesystem::path& path);

struct CorpusEntry {
  std::uint64_t seed = 0;
  std::string path;
  std::string split;
};

struct Corpus {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct CorpusSpec {
  SceneSpec scene;
  std::size_t train_count = 512;
  std::size_t test_count = 128;
  std::uint64_t train_seed = 0;
  std::uint64_t test_seed = 1'000'000;
};

Corpus synth_corpus(const CorpusSpec& spec);
/// Writes every sample plus manifest.jsonl (one {seed, path, split} per line).
std::vector<CorpusEntry> write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);
std::vector<CorpusEntry> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<CorpusEntry>& entries);
/// Loads samples listed in a manifest; relative paths resolve against it.
Corpus load_corpus(const std::filesystem::path& manifest);

}  // namespace asymfuse
