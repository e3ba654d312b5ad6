// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <map>

#include "asymfuse/error.hpp"
#include "asymfuse/network.hpp"
#include "asymfuse/tensor_io.hpp"
#include "json.hpp"

namespace asymfuse {

namespace fs = std::filesystem;

void save_checkpoint(const SegmentationModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create checkpoint directory " + dir.string());

  nlohmann::ordered_json manifest;
  manifest["format"] = "asymfuse-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = nlohmann::ordered_json::parse(model.config.to_json());
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for (const auto& [name, params] : model.blocks()) {
    std::vector<double> flat;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const auto& p : params.items()) {
      tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", flat.size()}});
      flat.insert(flat.end(), p.value.values().begin(), p.value.values().end());
    }
    const std::string file = name + ".atsr";
    const std::size_t count = flat.size();
    save_tensor(dir / file, Tensor({count}, std::move(flat)));
    blocks.push_back({{"name", name}, {"file", file}, {"tensors", tensors}});
  }
  manifest["blocks"] = blocks;
  std::ofstream out(dir / "manifest.json");
  require(out.is_open(), ErrorCode::kIo, "cannot write checkpoint manifest");
  out << manifest.dump(2) << '\n';
}

SegmentationModel load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require(in.is_open(), ErrorCode::kIo, "no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("bad checkpoint manifest: ") + e.what());
  }
  require(manifest.value("format", std::string()) == "asymfuse-checkpoint", ErrorCode::kFormat,
          "not an asymfuse checkpoint");
  require(manifest.value("version", 0) == 1, ErrorCode::kVersion, "unsupported checkpoint version");

  ModelConfig config = ModelConfig::from_json(manifest.at("config").dump());
  SegmentationModel model = build_model(config, 0);

  std::map<std::string, Tensor> by_name;
  const ParameterList params = model.parameters();
  for (const auto& p : params.items()) by_name.emplace(p.name, p.value);

  std::size_t assigned = 0;
  for (const auto& block : manifest.at("blocks")) {
    Tensor flat = load_tensor(dir / block.at("file").get<std::string>());
    auto values = flat.values();
    for (const auto& t : block.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      auto it = by_name.find(name);
      require(it != by_name.end(), ErrorCode::kFormat, "checkpoint has unknown tensor " + name);
      const auto shape = t.at("shape").get<Shape>();
      require(shape == it->second.shape(), ErrorCode::kFormat,
              "checkpoint tensor " + name + " has shape " + to_string(shape) + ", model expects " +
                  to_string(it->second.shape()));
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t n = it->second.size();
      require(offset + n <= values.size(), ErrorCode::kTruncated,
              "checkpoint block too short for " + name);
      auto dst = it->second.mutable_values();
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), n, dst.begin());
      ++assigned;
    }
  }
  require(assigned == by_name.size(), ErrorCode::kFormat,
          "checkpoint is missing " + std::to_string(by_name.size() - assigned) + " tensors");
  return model;
}

}  // namespace asymfuse
