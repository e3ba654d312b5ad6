// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "asymfuse/data.hpp"
#include "asymfuse/error.hpp"
#include "asymfuse/tensor_io.hpp"
#include "json.hpp"

namespace asymfuse {
namespace {

constexpr char kSampleMagic[4] = {'A', 'S', 'M', 'P'};

void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  require(in.gcount() == static_cast<std::streamsize>(n), ErrorCode::kTruncated,
          std::string("sample truncated while reading ") + what);
}

void write_u32(std::ostream& out, std::size_t v) {
  const auto v32 = static_cast<std::uint32_t>(v);
  out.write(reinterpret_cast<const char*>(&v32), sizeof v32);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  read_exact(in, &v, sizeof v, what);
  return v;
}

}  // namespace

void write_sample(std::ostream& out, const Sample& s) {
  out.write(kSampleMagic, 4);
  out.put(static_cast<char>(kSampleVersion));
  write_u32(out, s.labels.height);
  write_u32(out, s.labels.width);
  write_u32(out, s.num_classes);
  write_tensor(out, s.rgb);
  write_tensor(out, s.depth);
  out.write(reinterpret_cast<const char*>(s.labels.values.data()),
            static_cast<std::streamsize>(s.labels.values.size()));
  require(out.good(), ErrorCode::kIo, "failed writing sample");
}

Sample read_sample(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, "magic");
  require(std::memcmp(magic, kSampleMagic, 4) == 0, ErrorCode::kFormat, "bad sample magic");
  std::uint8_t version = 0;
  read_exact(in, &version, 1, "version");
  require(version == kSampleVersion, ErrorCode::kVersion,
          "unsupported sample version " + std::to_string(version));
  Sample s;
  const std::size_t h = read_u32(in, "height");
  const std::size_t w = read_u32(in, "width");
  s.num_classes = read_u32(in, "num_classes");
  s.rgb = read_tensor(in);
  s.depth = read_tensor(in);
  require(s.rgb.shape() == Shape{3, h, w} && s.depth.shape() == Shape{1, h, w},
          ErrorCode::kFormat, "sample tensors disagree with header size");
  s.labels = {h, w, std::vector<std::uint8_t>(h * w)};
  read_exact(in, s.labels.values.data(), h * w, "labels");
  return s;
}

void write_sample(const std::filesystem::path& path, const Sample& s) {
  std::ofstream out(path, std::ios::binary);
  require(out.is_open(), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_sample(out, s);
}

Sample read_sample(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), ErrorCode::kIo, "cannot open " + path.string());
  return read_sample(in);
}

Corpus synth_corpus(const CorpusSpec& spec) {
  Corpus c;
  c.train.reserve(spec.train_count);
  c.test.reserve(spec.test_count);
  for (std::size_t i = 0; i < spec.train_count; ++i)
    c.train.push_back(generate_sample(spec.train_seed + i, spec.scene));
  for (std::size_t i = 0; i < spec.test_count; ++i)
    c.test.push_back(generate_sample(spec.test_seed + i, spec.scene));
  return c;
}

std::vector<CorpusEntry> write_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create corpus directory " + dir.string());
  std::vector<CorpusEntry> entries;
  auto emit = [&](const char* split, std::uint64_t base, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t seed = base + i;
      const std::string name = std::string(split) + "_" + std::to_string(seed) + ".asmp";
      write_sample(dir / name, generate_sample(seed, spec.scene));
      entries.push_back({seed, name, split});
    }
  };
  emit("train", spec.train_seed, spec.train_count);
  emit("test", spec.test_seed, spec.test_count);
  write_manifest(dir / "manifest.jsonl", entries);
  return entries;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<CorpusEntry>& entries) {
  std::ofstream out(manifest);
  require(out.is_open(), ErrorCode::kIo, "cannot write " + manifest.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["seed"] = e.seed;
    j["path"] = e.path;
    j["split"] = e.split;
    out << j.dump() << '\n';
  }
}

std::vector<CorpusEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  require(in.is_open(), ErrorCode::kIo, "cannot open " + manifest.string());
  std::vector<CorpusEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries.push_back({j.at("seed").get<std::uint64_t>(), j.at("path").get<std::string>(),
                         j.at("split").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat,
           manifest.string() + ":" + std::to_string(line_no) + ": bad manifest record: " + e.what());
    }
  }
  return entries;
}

Corpus load_corpus(const std::filesystem::path& manifest) {
  Corpus c;
  const auto base = manifest.parent_path();
  for (const auto& e : read_manifest(manifest)) {
    std::filesystem::path p(e.path);
    if (p.is_relative()) p = base / p;
    Sample s = read_sample(p);
    if (e.split == "test") {
      c.test.push_back(std::move(s));
    } else {
      c.train.push_back(std::move(s));
    }
  }
  return c;
}

}  // namespace asymfuse
