// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asymfuse/data.hpp"
#include "asymfuse/network.hpp"
#include "asymfuse/train.hpp"

namespace asymfuse {

/// Everything a run depends on apart from the seed.
struct ExperimentConfig {
  ModelConfig model = ModelConfig::make_default();
  CorpusSpec corpus;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double base_lr = 5e-5;
  double weight_decay = 0.01;
  std::size_t warmup_epochs = 0;
  bool augment = true;
  double scale_min = 1.0;
  double scale_max = 2.0;

  void validate() const;
  /// Canonical JSON; key order is fixed so equal configs dump equal text.
  std::string to_json() const;
  /// Missing keys keep their defaults. The corpus image size follows the
  /// model input size unless given explicitly.
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  TrainOptions train_options(std::uint64_t seed, std::size_t train_samples) const;
};

/// FNV-1a over the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// One output row. Unmeasured numeric fields are NaN and serialize as empty
/// CSV cells / JSON null.
struct RunReport {
  std::string kind;  // train-epoch, eval, ablation, bench
  std::string variant;
  std::uint64_t seed = 0;
  std::int64_t epoch = -1;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  double latency_ms_mean;
  double latency_ms_std;
  double fps;
  double miou;
  double pixel_acc;
  double train_loss;
  std::string config_hash;
  std::string status = "ok";

  RunReport();
};

/// Reference numbers for one fusion variant from the published ablation.
struct PublishedReference {
  double miou;
  double fps;
};
PublishedReference published_reference(FusionVariant variant);

struct ReportCsvOptions {
  bool reference_annotations = false;
};
void write_reports_csv(const std::filesystem::path& path, const std::vector<RunReport>& rows,
                       const ReportCsvOptions& options = {});
void write_reports_jsonl(const std::filesystem::path& path, const std::vector<RunReport>& rows);
std::string report_json(const RunReport& row);

/// Corpus for an experiment: read from `manifest` when given, synthesized otherwise.
Corpus experiment_corpus(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& manifest = std::nullopt);

struct TrainedRun {
  SegmentationModel model;
  TrainTrace trace;
  RunReport report;  // evaluation on the test split
};

/// Builds the configured model, trains it and evaluates on the test split.
/// Divergence is reported in `report.status` instead of being thrown.
TrainedRun train_and_evaluate(const ExperimentConfig& config, std::uint64_t seed,
                              const Corpus& corpus, bool zero_depth = false);

struct TrainCommand {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> data_manifest;
};
/// Writes trace.csv, report.csv, report.jsonl and checkpoint/.
std::vector<RunReport> run_train(const TrainCommand& cmd);

struct EvalCommand {
  std::filesystem::path checkpoint;
  ExperimentConfig config;  // corpus settings only; the model comes from the checkpoint
  std::vector<double> scales{1.0};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> data_manifest;
};
std::vector<RunReport> run_eval(const EvalCommand& cmd);

struct AblationCommand {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> data_manifest;
};
/// One row per (seed, variant), variants in canonical order.
std::vector<RunReport> run_ablation(const AblationCommand& cmd);

struct BenchCommand {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  std::size_t warmup_runs = 5;
  std::size_t timed_runs = 30;
  std::vector<FusionVariant> variants{kAllVariants.begin(), kAllVariants.end()};
  std::filesystem::path out_dir;
};
/// Single-sample forward latency per variant; FPS = 1000 / mean ms.
std::vector<RunReport> run_bench(const BenchCommand& cmd);

/// Writes input.ppm plus stage<i>_spatial.pgm and its .json bounds for every
/// stage that produces a spatial map. Returns the files written.
std::vector<std::filesystem::path> dump_attention(const SegmentationModel& model,
                                                  const Sample& sample,
                                                  const std::filesystem::path& out_dir);

}  // namespace asymfuse
