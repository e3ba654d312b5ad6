// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "asymfuse/data.hpp"
#include "test_util.hpp"

namespace asymfuse {
namespace {

using testing::expect_all_near;
using testing::expect_bit_equal;
using testing::expect_error;

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("asymfuse_data_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

SceneSpec small_scene() {
  SceneSpec s;
  s.height = 32;
  s.width = 32;
  return s;
}

void expect_in_unit_range(const Tensor& t) {
  for (double v : t.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Scene, AmbiguityRuleByConstruction) {
  using A = SceneSpec;
  EXPECT_EQ(A::appearance(1).color, A::appearance(2).color);
  EXPECT_EQ(A::appearance(3).color, A::appearance(4).color);
  EXPECT_NE(A::appearance(1).color, A::appearance(3).color);
  EXPECT_LT(A::appearance(1).depth_hi, A::appearance(2).depth_lo);
  EXPECT_LT(A::appearance(3).depth_hi, A::appearance(4).depth_lo);
  EXPECT_EQ(A::appearance(1).depth_lo, A::appearance(3).depth_lo);
  EXPECT_EQ(A::appearance(2).depth_hi, A::appearance(4).depth_hi);
  expect_error([] { A::appearance(6); }, ErrorCode::kInvalidArgument);
}

TEST(Scene, InvalidSpecRejected) {
  SceneSpec s;
  s.num_classes = 7;
  expect_error([&] { generate_sample(1, s); }, ErrorCode::kConfig);
  s = SceneSpec{};
  s.min_shapes = 5;
  s.max_shapes = 2;
  expect_error([&] { generate_sample(1, s); }, ErrorCode::kConfig);
}

TEST(Generate, DeterministicInSeed) {
  const Sample a = generate_sample(42, SceneSpec{});
  const Sample b = generate_sample(42, SceneSpec{});
  EXPECT_TRUE(same_sample(a, b));
  EXPECT_FALSE(same_sample(a, generate_sample(43, SceneSpec{})));
}

TEST(Generate, ShapesAndRanges) {
  const Sample s = generate_sample(7, SceneSpec{});
  EXPECT_EQ(s.rgb.shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(s.depth.shape(), (Shape{1, 64, 64}));
  EXPECT_EQ(s.labels.height, 64u);
  EXPECT_EQ(s.labels.width, 64u);
  EXPECT_EQ(s.num_classes, 6u);
  expect_in_unit_range(s.rgb);
  expect_in_unit_range(s.depth);
  for (auto l : s.labels.values) EXPECT_LT(l, 6);
}

TEST(Generate, BackgroundOnlyIsAllClassZero) {
  SceneSpec spec;
  spec.background_only = true;
  const Sample s = generate_sample(3, spec);
  for (auto l : s.labels.values) ASSERT_EQ(l, 0);
}

TEST(Generate, LabelsFollowRenderedGeometry) {
  SceneSpec spec;
  spec.depth_noise = 0.0;
  spec.color_noise = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = generate_sample(seed, spec);
    const std::size_t n = 64 * 64;
    for (std::size_t p = 0; p < n; ++p) {
      const ClassAppearance a = SceneSpec::appearance(s.labels.values[p]);
      for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(s.rgb[c * n + p], a.color[c]);
      ASSERT_GE(s.depth[p], a.depth_lo);
      ASSERT_LE(s.depth[p], a.depth_hi);
    }
  }
}

TEST(Generate, CorpusCoversClassesWithDisjointDepthBands) {
  constexpr std::size_t kClasses = 6;
  std::array<std::size_t, kClasses> count{};
  std::array<double, kClasses> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  const SceneSpec spec;
  for (std::uint64_t seed = 0; seed < 512; ++seed) {
    const Sample s = generate_sample(seed, spec);
    for (std::size_t p = 0; p < s.labels.values.size(); ++p) {
      const auto c = s.labels.values[p];
      ++count[c];
      lo[c] = std::min(lo[c], s.depth[p]);
      hi[c] = std::max(hi[c], s.depth[p]);
    }
  }
  for (std::size_t c = 0; c < kClasses; ++c) EXPECT_GT(count[c], 0u) << "class " << c;
  EXPECT_LT(hi[1], lo[2]);
  EXPECT_LT(hi[3], lo[4]);
}

TEST(Augment, FlipIsAnInvolution) {
  const Sample s = generate_sample(5, small_scene());
  const Sample f = flip_horizontal(s);
  EXPECT_FALSE(same_sample(s, f));
  EXPECT_TRUE(same_sample(s, flip_horizontal(f)));
}

TEST(Augment, IdentityPolicyIsIdentity) {
  const Sample s = generate_sample(5, small_scene());
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    EXPECT_TRUE(same_sample(s, augment_sample(s, seed, AugmentPolicy::identity())));
}

TEST(Augment, DeterministicInSeed) {
  const Sample s = generate_sample(5, small_scene());
  AugmentPolicy p;
  EXPECT_TRUE(same_sample(augment_sample(s, 9, p), augment_sample(s, 9, p)));
}

TEST(Augment, UnitHsvJitterPreservesColor) {
  const Sample s = generate_sample(5, small_scene());
  expect_all_near(jitter_hsv(s.rgb, 0.0, 1.0, 1.0).values(), s.rgb.values(), 1e-12);
}

TEST(Augment, HsvLeavesDepthAndLabelsAlone) {
  const Sample s = generate_sample(5, small_scene());
  AugmentPolicy p = AugmentPolicy::identity();
  p.hsv = true;
  const Sample a = augment_sample(s, 3, p);
  EXPECT_FALSE(std::equal(a.rgb.values().begin(), a.rgb.values().end(), s.rgb.values().begin()));
  expect_bit_equal(a.depth.values(), s.depth.values());
  EXPECT_EQ(a.labels, s.labels);
}

TEST(Augment, LabelsAreNeverInterpolated) {
  AugmentPolicy p;
  p.crop_height = 32;
  p.crop_width = 32;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Sample s = generate_sample(seed, small_scene());
    const std::set<std::uint8_t> original(s.labels.values.begin(), s.labels.values.end());
    const Sample a = augment_sample(s, seed + 500, p);
    ASSERT_EQ(a.labels.height, 32u);
    ASSERT_EQ(a.rgb.shape(), (Shape{3, 32, 32}));
    for (auto l : a.labels.values) ASSERT_TRUE(original.count(l) || l == kIgnoreLabel);
    expect_in_unit_range(a.rgb);
    expect_in_unit_range(a.depth);
  }
}

TEST(Augment, NearestLabelRescaleDoublesPixels) {
  const Sample s = generate_sample(11, small_scene());
  const Sample r = rescale(s, 64, 64);
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) ASSERT_EQ(r.labels.at(y, x), s.labels.at(y / 2, x / 2));
}

TEST(Augment, OversizedCropRejected) {
  const Sample s = generate_sample(5, small_scene());
  AugmentPolicy p = AugmentPolicy::identity();
  p.crop_height = 40;
  expect_error([&] { augment_sample(s, 1, p); }, ErrorCode::kInvalidArgument);
  expect_error([&] { crop(s, 10, 0, 30, 32); }, ErrorCode::kInvalidArgument);
}

TEST(SampleIo, RoundTripIsBitExact) {
  const Sample s = generate_sample(21, small_scene());
  std::stringstream buf;
  write_sample(buf, s);
  EXPECT_TRUE(same_sample(read_sample(buf), s));

  const auto dir = scratch_dir("rt");
  std::filesystem::create_directories(dir);
  write_sample(dir / "s.asmp", s);
  EXPECT_TRUE(same_sample(read_sample(dir / "s.asmp"), s));
  std::filesystem::remove_all(dir);
}

TEST(SampleIo, HeaderLayout) {
  std::stringstream buf;
  write_sample(buf, generate_sample(21, small_scene()));
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "ASMP");
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[4]), kSampleVersion);
}

TEST(SampleIo, CorruptionYieldsDistinctErrors) {
  std::stringstream buf;
  write_sample(buf, generate_sample(21, small_scene()));
  const std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream a(bad_magic);
  expect_error([&] { read_sample(a); }, ErrorCode::kFormat);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  std::stringstream b(bad_version);
  expect_error([&] { read_sample(b); }, ErrorCode::kVersion);

  for (std::size_t keep : {std::size_t{2}, std::size_t{7}, bytes.size() / 2, bytes.size() - 1}) {
    std::stringstream c(bytes.substr(0, keep));
    expect_error([&] { read_sample(c); }, ErrorCode::kTruncated);
  }
  expect_error([] { read_sample(scratch_dir("none") / "x.asmp"); }, ErrorCode::kIo);
}

TEST(Corpus, SynthIsDeterministicAndSplit) {
  CorpusSpec spec;
  spec.scene = small_scene();
  spec.train_count = 6;
  spec.test_count = 3;
  const Corpus a = synth_corpus(spec), b = synth_corpus(spec);
  ASSERT_EQ(a.train.size(), 6u);
  ASSERT_EQ(a.test.size(), 3u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_TRUE(same_sample(a.train[i], b.train[i]));
  EXPECT_TRUE(same_sample(a.train[0], generate_sample(spec.train_seed, spec.scene)));
  EXPECT_TRUE(same_sample(a.test[0], generate_sample(spec.test_seed, spec.scene)));
}

TEST(Corpus, WriteThenLoadMatchesSynth) {
  const auto dir = scratch_dir("corpus");
  CorpusSpec spec;
  spec.scene = small_scene();
  spec.train_count = 4;
  spec.test_count = 2;
  const auto entries = write_corpus(dir, spec);
  ASSERT_EQ(entries.size(), 6u);
  EXPECT_EQ(entries.front().split, "train");
  EXPECT_EQ(entries.back().split, "test");

  const auto manifest = dir / "manifest.jsonl";
  const auto back = read_manifest(manifest);
  ASSERT_EQ(back.size(), entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].seed, entries[i].seed);
    EXPECT_EQ(back[i].path, entries[i].path);
    EXPECT_EQ(back[i].split, entries[i].split);
  }

  const Corpus loaded = load_corpus(manifest), synth = synth_corpus(spec);
  ASSERT_EQ(loaded.train.size(), 4u);
  ASSERT_EQ(loaded.test.size(), 2u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(same_sample(loaded.train[i], synth.train[i]));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(same_sample(loaded.test[i], synth.test[i]));
  std::filesystem::remove_all(dir);
}

TEST(Corpus, MalformedManifestRejected) {
  const auto dir = scratch_dir("badmanifest");
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.jsonl");
    out << "{\"seed\": 1, \"path\": \"a.asmp\"}\n";
  }
  expect_error([&] { read_manifest(dir / "manifest.jsonl"); }, ErrorCode::kFormat);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace asymfuse
