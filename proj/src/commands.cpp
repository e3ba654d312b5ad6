// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>

#include "asymfuse/cost.hpp"
#include "asymfuse/error.hpp"
#include "asymfuse/image_io.hpp"
#include "asymfuse/metrics.hpp"
#include "json.hpp"

namespace asymfuse {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), ErrorCode::kIo,
          "cannot create directory " + dir.string());
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

nlohmann::ordered_json json_number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

RunReport base_report(const std::string& kind, const SegmentationModel& model,
                      std::uint64_t seed, const std::string& hash) {
  RunReport r;
  r.kind = kind;
  r.variant = std::string(to_string(model.config.variant()));
  r.seed = seed;
  const Cost cost = count_params_flops(model);
  r.params = cost.params;
  r.macs = cost.macs;
  r.config_hash = hash;
  return r;
}

void write_outputs(const std::filesystem::path& out_dir, const std::vector<RunReport>& rows,
                   const ReportCsvOptions& csv = {}) {
  ensure_dir(out_dir);
  write_reports_csv(out_dir / "report.csv", rows, csv);
  write_reports_jsonl(out_dir / "report.jsonl", rows);
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  corpus.scene.validate();
  require(corpus.scene.height == model.input_height && corpus.scene.width == model.input_width,
          ErrorCode::kConfig, "corpus image size must match the model input size");
  require(corpus.scene.num_classes == model.num_classes, ErrorCode::kConfig,
          "corpus and model disagree on the class count");
  require(corpus.train_count > 0, ErrorCode::kConfig, "corpus needs training samples");
  require(batch_size > 0, ErrorCode::kConfig, "batch_size must be positive");
  require(base_lr >= 0.0 && weight_decay >= 0.0, ErrorCode::kConfig,
          "learning rate and weight decay must be non-negative");
  require(scale_min > 0.0 && scale_min <= scale_max, ErrorCode::kConfig, "bad scale range");
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = nlohmann::ordered_json::parse(model.to_json());
  nlohmann::ordered_json c;
  c["train_count"] = corpus.train_count;
  c["test_count"] = corpus.test_count;
  c["train_seed"] = corpus.train_seed;
  c["test_seed"] = corpus.test_seed;
  c["height"] = corpus.scene.height;
  c["width"] = corpus.scene.width;
  c["min_shapes"] = corpus.scene.min_shapes;
  c["max_shapes"] = corpus.scene.max_shapes;
  c["depth_noise"] = corpus.scene.depth_noise;
  c["color_noise"] = corpus.scene.color_noise;
  j["corpus"] = c;
  nlohmann::ordered_json t;
  t["epochs"] = epochs;
  t["batch_size"] = batch_size;
  t["base_lr"] = base_lr;
  t["weight_decay"] = weight_decay;
  t["warmup_epochs"] = warmup_epochs;
  t["augment"] = augment;
  t["scale_min"] = scale_min;
  t["scale_max"] = scale_max;
  j["train"] = t;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("experiment config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorCode::kConfig, "experiment config must be a JSON object");
  ExperimentConfig x;
  try {
    if (j.contains("model")) x.model = ModelConfig::from_json(j["model"].dump());
    if (j.contains("variant")) x.model.set_variant(parse_variant(j["variant"].get<std::string>()));
    x.corpus.scene.height = x.model.input_height;
    x.corpus.scene.width = x.model.input_width;
    x.corpus.scene.num_classes = x.model.num_classes;
    if (j.contains("corpus")) {
      const auto& c = j["corpus"];
      x.corpus.train_count = c.value("train_count", x.corpus.train_count);
      x.corpus.test_count = c.value("test_count", x.corpus.test_count);
      x.corpus.train_seed = c.value("train_seed", x.corpus.train_seed);
      x.corpus.test_seed = c.value("test_seed", x.corpus.test_seed);
      x.corpus.scene.height = c.value("height", x.corpus.scene.height);
      x.corpus.scene.width = c.value("width", x.corpus.scene.width);
      x.corpus.scene.min_shapes = c.value("min_shapes", x.corpus.scene.min_shapes);
      x.corpus.scene.max_shapes = c.value("max_shapes", x.corpus.scene.max_shapes);
      x.corpus.scene.depth_noise = c.value("depth_noise", x.corpus.scene.depth_noise);
      x.corpus.scene.color_noise = c.value("color_noise", x.corpus.scene.color_noise);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      x.epochs = t.value("epochs", x.epochs);
      x.batch_size = t.value("batch_size", x.batch_size);
      x.base_lr = t.value("base_lr", x.base_lr);
      x.weight_decay = t.value("weight_decay", x.weight_decay);
      x.warmup_epochs = t.value("warmup_epochs", x.warmup_epochs);
      x.augment = t.value("augment", x.augment);
      x.scale_min = t.value("scale_min", x.scale_min);
      x.scale_max = t.value("scale_max", x.scale_max);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad experiment config: ") + e.what());
  }
  x.validate();
  return x;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.is_open(), ErrorCode::kIo, "cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

TrainOptions ExperimentConfig::train_options(std::uint64_t seed, std::size_t train_samples) const {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.seed = seed;
  o.optimizer.base_lr = base_lr;
  o.optimizer.weight_decay = weight_decay;
  const std::size_t per_epoch = (train_samples + batch_size - 1) / batch_size;
  o.warmup_steps = warmup_epochs * per_epoch;
  o.augment = augment;
  o.augmentation.scale_min = scale_min;
  o.augmentation.scale_max = scale_max;
  return o;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.to_json()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunReport::RunReport()
    : latency_ms_mean(kNaN), latency_ms_std(kNaN), fps(kNaN), miou(kNaN), pixel_acc(kNaN),
      train_loss(kNaN) {}

PublishedReference published_reference(FusionVariant variant) {
  switch (variant) {
    case FusionVariant::kCat:
      return {47.0, 77.5};
    case FusionVariant::kSeMhsa:
      return {49.9, 65.7};
    case FusionVariant::kLafs:
      return {49.1, 75.7};
    case FusionVariant::kCma:
      return {49.6, 67.4};
    case FusionVariant::kLafsCma:
      return {54.1, 65.5};
  }
  fail(ErrorCode::kInvalidArgument, "unknown variant");
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<RunReport>& rows,
                       const ReportCsvOptions& options) {
  std::ofstream out(path);
  require(out.is_open(), ErrorCode::kIo, "cannot write " + path.string());
  out << "# macs are multiply-accumulates; 1 MAC = 2 FLOPs\n";
  out << "kind,variant,seed,epoch,params,macs,latency_ms_mean,latency_ms_std,fps,miou,pixel_acc,"
         "train_loss,config_hash,status";
  if (options.reference_annotations) out << ",ref_miou,ref_fps";
  out << '\n';
  for (const auto& r : rows) {
    out << r.kind << ',' << r.variant << ',' << r.seed << ','
        << (r.epoch >= 0 ? std::to_string(r.epoch) : std::string()) << ',' << r.params << ','
        << r.macs << ',' << fmt_double(r.latency_ms_mean) << ',' << fmt_double(r.latency_ms_std)
        << ',' << fmt_double(r.fps) << ',' << fmt_double(r.miou) << ','
        << fmt_double(r.pixel_acc) << ',' << fmt_double(r.train_loss) << ',' << r.config_hash
        << ',' << r.status;
    if (options.reference_annotations) {
      const PublishedReference ref = published_reference(parse_variant(r.variant));
      out << ',' << fmt_double(ref.miou) << ',' << fmt_double(ref.fps);
    }
    out << '\n';
  }
  require(out.good(), ErrorCode::kIo, "failed writing " + path.string());
}

std::string report_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["kind"] = r.kind;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["epoch"] = r.epoch >= 0 ? nlohmann::ordered_json(r.epoch) : nlohmann::ordered_json(nullptr);
  j["params"] = r.params;
  j["macs"] = r.macs;
  j["latency_ms_mean"] = json_number(r.latency_ms_mean);
  j["latency_ms_std"] = json_number(r.latency_ms_std);
  j["fps"] = json_number(r.fps);
  j["miou"] = json_number(r.miou);
  j["pixel_acc"] = json_number(r.pixel_acc);
  j["train_loss"] = json_number(r.train_loss);
  j["config_hash"] = r.config_hash;
  j["status"] = r.status;
  return j.dump();
}

void write_reports_jsonl(const std::filesystem::path& path, const std::vector<RunReport>& rows) {
  std::ofstream out(path);
  require(out.is_open(), ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& r : rows) out << report_json(r) << '\n';
  require(out.good(), ErrorCode::kIo, "failed writing " + path.string());
}

Corpus experiment_corpus(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& manifest) {
  if (!manifest) return synth_corpus(config.corpus);
  Corpus c = load_corpus(*manifest);
  require(!c.train.empty(), ErrorCode::kConfig, "manifest lists no training samples");
  return c;
}

TrainedRun train_and_evaluate(const ExperimentConfig& config, std::uint64_t seed,
                              const Corpus& corpus, bool zero_depth) {
  config.validate();
  TrainedRun run{build_model(config.model, seed), {}, {}};
  const std::string hash = config_hash(config);
  run.report = base_report("eval", run.model, seed, hash);
  TrainOptions opts = config.train_options(seed, corpus.train.size());
  opts.zero_depth = zero_depth;
  try {
    run.trace = train_loop(run.model, corpus.train, opts);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDiverged && e.code() != ErrorCode::kNonFinite) throw;
    std::cerr << "warning: " << run.report.variant << " seed " << seed << ": " << e.what() << '\n';
    run.report.status = "diverged";
    return run;
  }
  if (!run.trace.epochs.empty()) run.report.train_loss = run.trace.epochs.back().mean_loss;
  if (!corpus.test.empty()) {
    EvalOptions eval;
    eval.zero_depth = zero_depth;
    MetricAccumulator acc = evaluate_model(run.model, corpus.test, eval);
    run.report.miou = 100.0 * acc.mean_iou();
    run.report.pixel_acc = 100.0 * acc.pixel_accuracy();
  }
  return run;
}

std::vector<RunReport> run_train(const TrainCommand& cmd) {
  ensure_dir(cmd.out_dir);
  const Corpus corpus = experiment_corpus(cmd.config, cmd.data_manifest);
  TrainedRun run = train_and_evaluate(cmd.config, cmd.seed, corpus);
  std::vector<RunReport> rows;
  for (const auto& e : run.trace.epochs) {
    RunReport r = run.report;
    r.kind = "train-epoch";
    r.epoch = static_cast<std::int64_t>(e.epoch);
    r.miou = 100.0 * e.miou;
    r.pixel_acc = 100.0 * e.pixel_acc;
    r.train_loss = e.mean_loss;
    r.status = "ok";
    rows.push_back(r);
  }
  rows.push_back(run.report);
  write_trace_csv((cmd.out_dir / "trace.csv").string(), run.trace);
  write_outputs(cmd.out_dir, rows);
  if (run.report.status == "ok") save_checkpoint(run.model, cmd.out_dir / "checkpoint");
  return rows;
}

std::vector<RunReport> run_eval(const EvalCommand& cmd) {
  SegmentationModel model = load_checkpoint(cmd.checkpoint);
  ExperimentConfig cfg = cmd.config;
  cfg.model = model.config;
  cfg.corpus.scene.height = model.config.input_height;
  cfg.corpus.scene.width = model.config.input_width;
  cfg.corpus.scene.num_classes = model.config.num_classes;
  const Corpus corpus = experiment_corpus(cfg, cmd.data_manifest);
  require(!corpus.test.empty(), ErrorCode::kConfig, "no test samples to evaluate");
  EvalOptions opts;
  opts.scales = cmd.scales;
  MetricAccumulator acc = evaluate_model(model, corpus.test, opts);
  RunReport r = base_report("eval", model, cmd.seed, config_hash(cfg));
  r.miou = 100.0 * acc.mean_iou();
  r.pixel_acc = 100.0 * acc.pixel_accuracy();
  std::vector<RunReport> rows{r};
  write_outputs(cmd.out_dir, rows);
  return rows;
}

std::vector<RunReport> run_ablation(const AblationCommand& cmd) {
  require(!cmd.seeds.empty(), ErrorCode::kInvalidArgument, "ablation needs at least one seed");
  ensure_dir(cmd.out_dir);
  const Corpus corpus = experiment_corpus(cmd.config, cmd.data_manifest);
  std::vector<RunReport> rows;
  for (std::uint64_t seed : cmd.seeds) {
    for (FusionVariant v : kAllVariants) {
      ExperimentConfig cfg = cmd.config;
      cfg.model.set_variant(v);
      RunReport r = train_and_evaluate(cfg, seed, corpus).report;
      r.kind = "ablation";
      rows.push_back(r);
    }
  }
  write_outputs(cmd.out_dir, rows, {.reference_annotations = true});
  return rows;
}

std::vector<RunReport> run_bench(const BenchCommand& cmd) {
  require(cmd.timed_runs >= 2, ErrorCode::kInvalidArgument, "bench needs at least two timed runs");
  const Sample sample = generate_sample(cmd.config.corpus.test_seed, cmd.config.corpus.scene);
  std::vector<RunReport> rows;
  NoGradGuard no_grad;
  for (FusionVariant v : cmd.variants) {
    ExperimentConfig cfg = cmd.config;
    cfg.model.set_variant(v);
    const SegmentationModel model = build_model(cfg.model, cmd.seed);
    RunReport r = base_report("bench", model, cmd.seed, config_hash(cfg));
    for (std::size_t i = 0; i < cmd.warmup_runs; ++i) model_forward(sample.rgb, sample.depth, model);
    std::vector<double> ms;
    for (std::size_t i = 0; i < cmd.timed_runs; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      Tensor logits = model_forward(sample.rgb, sample.depth, model).logits;
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double mean = 0.0;
    for (double x : ms) mean += x;
    mean /= static_cast<double>(ms.size());
    double var = 0.0;
    for (double x : ms) var += (x - mean) * (x - mean);
    r.latency_ms_mean = mean;
    r.latency_ms_std = std::sqrt(var / static_cast<double>(ms.size() - 1));
    r.fps = 1000.0 / mean;
    rows.push_back(r);
  }
  if (!cmd.out_dir.empty()) write_outputs(cmd.out_dir, rows);
  return rows;
}

std::vector<std::filesystem::path> dump_attention(const SegmentationModel& model,
                                                  const Sample& sample,
                                                  const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  ForwardResult fw;
  {
    NoGradGuard no_grad;
    fw = model_forward(sample.rgb, sample.depth, model);
  }
  std::vector<std::filesystem::path> written;
  const auto input = out_dir / "input.ppm";
  write_ppm(input, sample.rgb);
  written.push_back(input);
  for (std::size_t i = 0; i < fw.spatial_attention.size(); ++i) {
    const Tensor& ws = fw.spatial_attention[i];
    if (!ws.defined()) continue;
    const std::size_t h = ws.dim(1), w = ws.dim(2);
    const Normalization norm = normalization_for(ws.values());
    const std::string stem = "stage" + std::to_string(i + 1) + "_spatial";
    write_pgm(out_dir / (stem + ".pgm"), quantize(ws.values(), h, w, norm));
    write_normalization(out_dir / (stem + ".json"), norm);
    written.push_back(out_dir / (stem + ".pgm"));
    written.push_back(out_dir / (stem + ".json"));
  }
  return written;
}

}  // namespace asymfuse
