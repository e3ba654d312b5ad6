// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asymfuse/commands.hpp"
#include "asymfuse/error.hpp"

namespace {

using asymfuse::ExperimentConfig;

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string variant;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::string data;
};

void add_common(CLI::App* sub, CommonFlags& f, bool training) {
  sub->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "Seed for init, data order and augmentation");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--variant", f.variant, "Cat, SE_MHSA, LAFS, CMA or LAFS_CMA");
  sub->add_option("--data", f.data, "Corpus manifest.jsonl (default: synthesize)");
  if (training) {
    sub->add_option("--epochs", f.epochs, "Training epochs");
    sub->add_option("--batch", f.batch, "Batch size");
  }
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(f.config);
  if (!f.variant.empty()) c.model.set_variant(asymfuse::parse_variant(f.variant));
  if (f.epochs) c.epochs = *f.epochs;
  if (f.batch) c.batch_size = *f.batch;
  c.validate();
  return c;
}

std::optional<std::filesystem::path> manifest(const CommonFlags& f) {
  if (f.data.empty()) return std::nullopt;
  return std::filesystem::path(f.data);
}

void print_rows(const std::vector<asymfuse::RunReport>& rows) {
  for (const auto& r : rows) std::cout << asymfuse::report_json(r) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymfuse: RGB-D fusion blocks, toy segmentation training and ablations"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, eval_f, ablate_f, bench_f, dump_f;

  auto* synth = app.add_subcommand("synth", "Write the synthetic corpus and its manifest");
  add_common(synth, synth_f, false);

  auto* train = app.add_subcommand("train", "Train one model and evaluate it on the test split");
  add_common(train, train_f, true);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval, eval_f, false);
  std::string eval_ckpt;
  std::vector<double> scales{1.0};
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--scales", scales, "Inference scales, e.g. 0.5,1,1.5")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all five fusion variants");
  add_common(ablate, ablate_f, true);
  std::vector<std::uint64_t> seeds;
  ablate->add_option("--seeds", seeds, "Seed list (overrides --seed)")->delimiter(',');

  auto* bench = app.add_subcommand("bench", "Forward latency per fusion variant");
  add_common(bench, bench_f, false);
  std::size_t warmup = 5, runs = 30;
  bench->add_option("--warmup", warmup, "Untimed warmup runs")->check(CLI::NonNegativeNumber);
  bench->add_option("--runs", runs, "Timed runs")->check(CLI::Range(2, 100000));

  auto* dump = app.add_subcommand("dump-attention", "Write spatial attention maps as PGM");
  add_common(dump, dump_f, false);
  std::string dump_ckpt;
  std::uint64_t sample_seed = 1'000'000;
  dump->add_option("--checkpoint", dump_ckpt, "Checkpoint directory (default: fresh init)");
  dump->add_option("--sample-seed", sample_seed, "Synthetic sample to visualize");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const ExperimentConfig c = resolve(synth_f);
      const auto entries = asymfuse::write_corpus(synth_f.out, c.corpus);
      std::cout << "wrote " << entries.size() << " samples to " << synth_f.out << '\n';
    } else if (train->parsed()) {
      print_rows(asymfuse::run_train({resolve(train_f), train_f.seed, train_f.out, manifest(train_f)}));
    } else if (eval->parsed()) {
      asymfuse::EvalCommand cmd;
      cmd.checkpoint = eval_ckpt;
      cmd.config = resolve(eval_f);
      cmd.scales = scales;
      cmd.seed = eval_f.seed;
      cmd.out_dir = eval_f.out;
      cmd.data_manifest = manifest(eval_f);
      print_rows(asymfuse::run_eval(cmd));
    } else if (ablate->parsed()) {
      asymfuse::AblationCommand cmd;
      cmd.config = resolve(ablate_f);
      cmd.seeds = seeds.empty() ? std::vector<std::uint64_t>{ablate_f.seed} : seeds;
      cmd.out_dir = ablate_f.out;
      cmd.data_manifest = manifest(ablate_f);
      print_rows(asymfuse::run_ablation(cmd));
    } else if (bench->parsed()) {
      asymfuse::BenchCommand cmd;
      cmd.config = resolve(bench_f);
      cmd.seed = bench_f.seed;
      cmd.warmup_runs = warmup;
      cmd.timed_runs = runs;
      if (!bench_f.variant.empty()) cmd.variants = {asymfuse::parse_variant(bench_f.variant)};
      cmd.out_dir = bench_f.out;
      print_rows(asymfuse::run_bench(cmd));
    } else if (dump->parsed()) {
      const ExperimentConfig c = resolve(dump_f);
      const auto model = dump_ckpt.empty() ? asymfuse::build_model(c.model, dump_f.seed)
                                           : asymfuse::load_checkpoint(dump_ckpt);
      auto scene = c.corpus.scene;
      scene.height = model.config.input_height;
      scene.width = model.config.input_width;
      const auto sample = asymfuse::generate_sample(sample_seed, scene);
      for (const auto& p : asymfuse::dump_attention(model, sample, dump_f.out))
        std::cout << p.string() << '\n';
    }
  } catch (const asymfuse::Error& e) {
    std::cerr << "error [" << asymfuse::to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
