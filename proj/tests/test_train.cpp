// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "asymfuse/cost.hpp"
#include "asymfuse/metrics.hpp"
#include "asymfuse/train.hpp"
#include "test_util.hpp"

namespace asymfuse {
namespace {

using testing::expect_bit_equal;
using testing::expect_error;
using testing::kGradTol;
using testing::random_tensor;

LabelGrid grid(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) {
  return {h, w, std::move(v)};
}

// ---- poly_lr ------------------------------------------------------------------------------

TEST(PolyLr, Endpoints) {
  EXPECT_EQ(poly_lr(10, 100, 5e-5, 10), 5e-5);
  EXPECT_EQ(poly_lr(100, 100, 5e-5, 10), 0.0);
  EXPECT_EQ(poly_lr(0, 100, 5e-5, 10), 0.0);
  EXPECT_EQ(poly_lr(0, 100, 5e-5, 0), 5e-5);
}

TEST(PolyLr, HalfwayMatchesScalarOracle) {
  const double half_pow = std::exp(0.9 * std::log(0.5));
  EXPECT_NEAR(poly_lr(50, 100, 5e-5, 0), 5e-5 * half_pow, 1e-18);
}

TEST(PolyLr, LinearWarmup) {
  for (std::size_t i = 0; i <= 10; ++i)
    EXPECT_NEAR(poly_lr(i, 100, 2e-3, 10), 2e-3 * static_cast<double>(i) / 10.0, 1e-18);
}

TEST(PolyLr, NonIncreasingAfterWarmupAndContinuous) {
  const std::size_t warm = 7, max = 60;
  double prev = poly_lr(warm, max, 1.0, warm);
  EXPECT_EQ(prev, 1.0);
  EXPECT_NEAR(poly_lr(warm - 1, max, 1.0, warm), 1.0, 1.0 / warm + 1e-12);
  for (std::size_t i = warm + 1; i <= max; ++i) {
    const double lr = poly_lr(i, max, 1.0, warm);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(PolyLr, PastEndClampsToZero) {
  EXPECT_EQ(poly_lr(101, 100, 5e-5, 10), 0.0);
  EXPECT_EQ(poly_lr(1000, 100, 5e-5, 10), 0.0);
  expect_error([] { poly_lr(0, 0, 1.0, 0); }, ErrorCode::kInvalidArgument);
}

// ---- AdamW --------------------------------------------------------------------------------

ParameterList single(const std::string& name, Tensor t) {
  ParameterList p;
  p.add(name, std::move(t));
  return p;
}

void set_grad(Tensor& w, const std::vector<double>& g) {
  w.zero_grad();
  backward(ops::sum(ops::mul(w, Tensor(w.shape(), g))));
}

TEST(AdamW, ZeroGradientIsPureDecay) {
  Tensor w({4}, {1.0, -2.5, 0.3, 7.0}, true);
  const std::vector<double> before(w.values().begin(), w.values().end());
  ParameterList p = single("w", w);
  OptimState s = make_optim_state(p);
  set_grad(w, {0, 0, 0, 0});
  const double lr = 1e-3;
  adamw_step(p, s, lr);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(w[i], before[i] * (1.0 - lr * 0.01));
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamW, FirstStepIsSignedLearningRate) {
  Tensor w({3}, {0.5, 0.5, 0.5}, true);
  ParameterList p = single("w", w);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  OptimState s = make_optim_state(p, cfg);
  const std::vector<double> g{0.3, -2.0, 1e-3};
  set_grad(w, g);
  adamw_step(p, s, 0.01);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(w[i], 0.5 - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    EXPECT_NEAR(0.5 - w[i], 0.01 * (g[i] > 0 ? 1.0 : -1.0), 1e-7);
  }
}

TEST(AdamW, ZeroLearningRateIsIdentity) {
  Tensor w = random_tensor({5}, 1, true);
  const std::vector<double> before(w.values().begin(), w.values().end());
  ParameterList p = single("w", w);
  OptimState s = make_optim_state(p);
  for (int i = 0; i < 3; ++i) {
    set_grad(w, {1, -2, 3, -4, 5});
    adamw_step(p, s, 0.0);
  }
  expect_bit_equal(w.values(), before);
}

TEST(AdamW, MatchesReferenceTraceOnQuadratic) {
  const std::vector<double> a{1.0, 3.0, 0.5}, b{0.2, -1.0, 2.0};
  Tensor x({3}, {1.0, 1.0, 1.0}, true);
  ParameterList p = single("x", x);
  OptimState s = make_optim_state(p);
  std::vector<double> rx{1.0, 1.0, 1.0}, m(3, 0.0), v(3, 0.0);
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  for (int t = 1; t <= 5; ++t) {
    x.zero_grad();
    Tensor diff = ops::add(x, Tensor({3}, {-b[0], -b[1], -b[2]}));
    backward(ops::sum(ops::mul(Tensor({3}, a), ops::mul(diff, diff))));
    adamw_step(p, s, lr);

    for (std::size_t i = 0; i < 3; ++i) {
      const double g = 2.0 * a[i] * (rx[i] - b[i]);
      rx[i] = rx[i] - lr * wd * rx[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      rx[i] = rx[i] - lr * mh / (std::sqrt(vh) + eps);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x[i], rx[i], 1e-12) << "t=" << t;
  }
}

TEST(AdamW, MissingGradientNamesParameter) {
  Tensor w = random_tensor({2}, 1, true);
  ParameterList p = single("decoder.classify.weight", w);
  OptimState s = make_optim_state(p);
  try {
    adamw_step(p, s, 0.1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingGrad);
    EXPECT_NE(std::string(e.what()).find("decoder.classify.weight"), std::string::npos);
  }
  EXPECT_EQ(s.step, 0u);
}

TEST(AdamW, MomentBuffersMatchParameters) {
  const SegmentationModel m = build_model(ModelConfig::micro(), 1);
  const ParameterList p = m.parameters();
  const OptimState s = make_optim_state(p);
  ASSERT_EQ(s.first_moment.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(s.first_moment[i].size(), p.items()[i].value.size());
    EXPECT_EQ(s.second_moment[i].size(), p.items()[i].value.size());
  }
}

// ---- cross entropy --------------------------------------------------------------------------

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  for (std::size_t k : {2u, 4u, 6u}) {
    const Tensor logits = Tensor::full({k, 3, 2}, 0.7);
    const double loss = cross_entropy(logits, grid(3, 2, {0, 1, 1, 0, 1, 0})).item();
    EXPECT_NEAR(loss, std::log(static_cast<double>(k)), 1e-12);
  }
  EXPECT_NEAR(std::log(4.0), 1.386294, 1e-6);
}

TEST(CrossEntropy, SaturatedCorrectLogit) {
  std::vector<double> v(4 * 2 * 2, 0.0);
  const LabelGrid labels = grid(2, 2, {0, 3, 2, 1});
  for (std::size_t p = 0; p < 4; ++p) v[labels.values[p] * 4 + p] = 20.0;
  EXPECT_LT(cross_entropy(Tensor({4, 2, 2}, v), labels).item(), 1e-8);
}

TEST(CrossEntropy, MatchesPixelLoopOracle) {
  const Tensor logits = random_tensor({3, 2, 2}, 5, false, -3, 3);
  const LabelGrid labels = grid(2, 2, {2, 0, kIgnoreLabel, 1});
  double total = 0.0;
  int n = 0;
  for (std::size_t p = 0; p < 4; ++p) {
    if (labels.values[p] == kIgnoreLabel) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits[c * 4 + p]);
    total += -(logits[labels.values[p] * 4 + p] - std::log(z));
    ++n;
  }
  EXPECT_NEAR(cross_entropy(logits, labels).item(), total / n, 1e-10);
}

TEST(CrossEntropy, NonNegativeAndGradientChecked) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    Tensor logits = random_tensor({4, 3, 3}, rng(), true, -5, 5);
    std::vector<std::uint8_t> v(9);
    for (auto& l : v) l = static_cast<std::uint8_t>(rng() % 5 == 0 ? kIgnoreLabel : rng() % 4);
    v[0] = 1;
    const LabelGrid labels = grid(3, 3, v);
    EXPECT_GE(cross_entropy(logits, labels).item(), 0.0);
    const GradCheckResult r =
        gradcheck([&] { return cross_entropy(logits, labels); }, {{"logits", logits}});
    EXPECT_LT(r.max_rel_error, kGradTol);
  }
}

TEST(CrossEntropy, Errors) {
  const Tensor logits = Tensor::zeros({3, 1, 2});
  expect_error([&] { cross_entropy(logits, grid(1, 2, {kIgnoreLabel, kIgnoreLabel})); },
               ErrorCode::kInvalidArgument);
  expect_error([&] { cross_entropy(logits, grid(1, 2, {0, 3})); }, ErrorCode::kInvalidArgument);
  expect_error([&] { cross_entropy(logits, grid(2, 1, {0, 1})); }, ErrorCode::kShapeMismatch);
  const Tensor bad({3, 1, 2}, {0, std::nan(""), 0, 0, 0, 0});
  expect_error([&] { cross_entropy(bad, grid(1, 2, {0, 1})); }, ErrorCode::kNonFinite);
}

// ---- metrics -------------------------------------------------------------------------------

TEST(Metrics, PerfectAndComplement) {
  const LabelGrid t = grid(2, 2, {0, 1, 1, 0});
  MetricAccumulator a(2);
  const SegMetrics perfect = evaluate(t, t, a);
  EXPECT_EQ(perfect.miou, 1.0);
  EXPECT_EQ(perfect.pixel_acc, 1.0);
  MetricAccumulator b(2);
  const SegMetrics wrong = evaluate(grid(2, 2, {1, 0, 0, 1}), t, b);
  EXPECT_EQ(wrong.miou, 0.0);
  EXPECT_EQ(wrong.pixel_acc, 0.0);
}

TEST(Metrics, HandBuiltConfusionMatrix) {
  // Truth 0: 6 right, 2 predicted as 1. Truth 1: 1 predicted as 0, 7 right.
  const LabelGrid truth = grid(4, 4, {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1});
  const LabelGrid pred = grid(4, 4, {0, 0, 0, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1});
  MetricAccumulator acc(2);
  const SegMetrics m = evaluate(pred, truth, acc);
  EXPECT_EQ(acc.count(0, 0), 6u);
  EXPECT_EQ(acc.count(0, 1), 2u);
  EXPECT_EQ(acc.count(1, 0), 1u);
  EXPECT_EQ(acc.count(1, 1), 7u);
  EXPECT_DOUBLE_EQ(acc.iou(0), 6.0 / 9.0);
  EXPECT_DOUBLE_EQ(acc.iou(1), 7.0 / 10.0);
  EXPECT_DOUBLE_EQ(m.miou, (6.0 / 9.0 + 7.0 / 10.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.pixel_acc, 13.0 / 16.0);
}

TEST(Metrics, IgnoreAndAbsentClasses) {
  MetricAccumulator acc(4);
  acc.add(grid(1, 4, {0, 1, 3, 2}), grid(1, 4, {0, 1, kIgnoreLabel, 1}));
  EXPECT_EQ(acc.total(), 3u);
  EXPECT_FALSE(acc.present(2));
  EXPECT_FALSE(acc.present(3));
  EXPECT_DOUBLE_EQ(acc.mean_iou(), (1.0 + 0.5) / 2.0);
  expect_error([&] { acc.add(grid(1, 2, {0, 1}), grid(1, 2, {0, 4})); },
               ErrorCode::kInvalidArgument);
  expect_error([&] { acc.add(grid(1, 2, {0, 1}), grid(2, 1, {0, 1})); },
               ErrorCode::kShapeMismatch);
}

TEST(Metrics, PixelPermutationInvariantAndAdditive) {
  std::mt19937_64 rng(8);
  std::vector<std::uint8_t> t(64), p(64);
  for (std::size_t i = 0; i < 64; ++i) {
    t[i] = static_cast<std::uint8_t>(rng() % 5);
    p[i] = static_cast<std::uint8_t>(rng() % 5);
  }
  MetricAccumulator base(5);
  base.add(grid(8, 8, p), grid(8, 8, t));

  std::vector<std::size_t> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::uint8_t> tp(64), pp(64);
  for (std::size_t i = 0; i < 64; ++i) {
    tp[i] = t[perm[i]];
    pp[i] = p[perm[i]];
  }
  MetricAccumulator shuffled(5);
  shuffled.add(grid(8, 8, pp), grid(8, 8, tp));

  MetricAccumulator first(5), second(5);
  first.add(grid(4, 8, {p.begin(), p.begin() + 32}), grid(4, 8, {t.begin(), t.begin() + 32}));
  second.add(grid(4, 8, {p.begin() + 32, p.end()}), grid(4, 8, {t.begin() + 32, t.end()}));
  first.merge(second);

  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      EXPECT_EQ(shuffled.count(a, b), base.count(a, b));
      EXPECT_EQ(first.count(a, b), base.count(a, b));
    }
  }
  EXPECT_EQ(shuffled.mean_iou(), base.mean_iou());
  EXPECT_EQ(first.total(), 64u);
}

TEST(Metrics, ArgmaxLabels) {
  const Tensor logits({3, 1, 3}, {0.1, 5.0, -1.0, 0.9, 0.0, -2.0, 0.2, 1.0, 3.0});
  EXPECT_EQ(argmax_labels(logits).values, (std::vector<std::uint8_t>{1, 0, 2}));
}

// ---- cost accounting ------------------------------------------------------------------------

TEST(Cost, WorkedExamples) {
  EXPECT_EQ(linear_cost(8, 4, 1).params, 36u);
  const Cost conv = conv_cost(2, 3, 3, 1, 1, 8, 8);
  EXPECT_EQ(conv.params, 57u);
  EXPECT_EQ(conv.macs, 3456u);
  EXPECT_EQ(conv.flops(), 2u * 3456u);
  EXPECT_EQ(conv_cost(2, 3, 3, 2, 1, 8, 8).macs, 9u * 2 * 3 * 4 * 4);
  EXPECT_EQ(attention_cost(16, 16, 4, 4).macs, 16u * 16 * 8);
}

// Counts the multiplies of a direct padded convolution loop.
TEST(Cost, ConvMacsMatchLoopCount) {
  for (auto [cin, cout, k, stride, pad, h, w] :
       {std::array<std::size_t, 7>{2, 3, 3, 1, 1, 8, 8}, {3, 5, 3, 2, 1, 9, 7}, {4, 2, 1, 1, 0, 5, 6}}) {
    const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
    std::uint64_t n = 0;
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x)
          for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx) ++n;
    EXPECT_EQ(conv_cost(cin, cout, k, stride, pad, h, w).macs, n);
  }
}

TEST(Cost, ModelParamsMatchTensorCount) {
  for (FusionVariant v : kAllVariants) {
    const ModelConfig c = ModelConfig::make_default(v);
    const SegmentationModel m = build_model(c, 1);
    const ModelCost analytic = model_cost(c);
    EXPECT_EQ(analytic.total().params, m.parameters().element_count()) << to_string(v);
    EXPECT_EQ(analytic.rgb.params, m.rgb_parameters().element_count());
    EXPECT_EQ(analytic.depth.params, m.depth_parameters().element_count());
    EXPECT_EQ(analytic.decoder.params, m.decoder_parameters().element_count());
    EXPECT_EQ(analytic.fusion_total().params, m.fusion_parameters().element_count());
    EXPECT_EQ(count_params_flops(m), analytic.total());
    EXPECT_EQ(count_params_flops(m), count_params_flops(build_model(c, 2)));
  }
}

TEST(Cost, VariantOrderingAtDefaultWidths) {
  auto fusion_params = [](FusionVariant v) {
    return model_cost(ModelConfig::make_default(v)).fusion_total().params;
  };
  EXPECT_LT(fusion_params(FusionVariant::kLafs), fusion_params(FusionVariant::kSeMhsa));
  EXPECT_LT(fusion_params(FusionVariant::kSeMhsa), fusion_params(FusionVariant::kLafsCma));
  EXPECT_LT(fusion_params(FusionVariant::kCat), fusion_params(FusionVariant::kLafs));
}

// ---- training ---------------------------------------------------------------------------------

std::vector<Sample> micro_samples(std::size_t n, std::uint64_t seed0 = 0) {
  SceneSpec spec;
  spec.num_classes = 3;
  spec.height = 16;
  spec.width = 16;
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(seed0 + i, spec));
  return out;
}

TrainOptions micro_options() {
  TrainOptions o;
  o.epochs = 2;
  o.batch_size = 2;
  o.seed = 11;
  o.optimizer.base_lr = 1e-2;
  o.augmentation.scale_max = 1.5;
  return o;
}

TEST(Train, SameSeedGivesBitIdenticalTraces) {
  const auto samples = micro_samples(5);
  SegmentationModel a = build_model(ModelConfig::micro(), 4);
  SegmentationModel b = build_model(ModelConfig::micro(), 4);
  const TrainTrace ta = train_loop(a, samples, micro_options());
  const TrainTrace tb = train_loop(b, samples, micro_options());
  ASSERT_EQ(ta.steps.size(), 6u);
  ASSERT_EQ(ta.epochs.size(), 2u);
  for (std::size_t i = 0; i < ta.steps.size(); ++i) {
    EXPECT_EQ(ta.steps[i].loss, tb.steps[i].loss);
    EXPECT_EQ(ta.steps[i].lr, tb.steps[i].lr);
  }
  const ParameterList pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    expect_bit_equal(pa.items()[i].value.values(), pb.items()[i].value.values());
}

TEST(Train, ZeroLearningRateGivesConstantLoss) {
  const auto samples = micro_samples(3);
  SegmentationModel m = build_model(ModelConfig::micro(), 4);
  TrainOptions o = micro_options();
  o.optimizer.base_lr = 0.0;
  o.augment = false;
  o.batch_size = 3;
  o.epochs = 4;
  const TrainTrace t = train_loop(m, samples, o);
  ASSERT_EQ(t.steps.size(), 4u);
  for (const auto& s : t.steps) {
    EXPECT_EQ(s.loss, t.steps[0].loss);
    EXPECT_EQ(s.lr, 0.0);
  }
}

TEST(Train, LossDecreasesOnFixedBatch) {
  const auto samples = micro_samples(2);
  SegmentationModel m = build_model(ModelConfig::micro(), 4);
  TrainOptions o = micro_options();
  o.augment = false;
  o.batch_size = 2;
  o.epochs = 30;
  const TrainTrace t = train_loop(m, samples, o);
  EXPECT_LT(t.steps.back().loss, 0.5 * t.steps.front().loss);
}

TEST(Train, StepCountsAndScheduleBookkeeping) {
  const auto samples = micro_samples(5);
  SegmentationModel m = build_model(ModelConfig::micro(), 4);
  TrainOptions o = micro_options();
  o.max_steps = 4;
  o.warmup_steps = 2;
  std::size_t callbacks = 0;
  o.on_step = [&](const StepRecord&) { ++callbacks; };
  const TrainTrace t = train_loop(m, samples, o);
  ASSERT_EQ(t.steps.size(), 4u);
  EXPECT_EQ(callbacks, 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t.steps[i].step, i);
    EXPECT_EQ(t.steps[i].lr, poly_lr(i, 4, o.optimizer.base_lr, 2));
  }
  EXPECT_EQ(t.steps[3].epoch, 1u);
}

TEST(Train, NonFiniteParametersAbortAsDivergence) {
  const auto samples = micro_samples(2);
  SegmentationModel m = build_model(ModelConfig::micro(), 4);
  m.decoder.classify.bias.mutable_values()[0] = std::numeric_limits<double>::infinity();
  expect_error([&] { train_loop(m, samples, micro_options()); }, ErrorCode::kDiverged);
  expect_error([&] { train_loop(m, {}, micro_options()); }, ErrorCode::kInvalidArgument);
}

TEST(Eval, ZeroDepthAndScalesAreHonoured) {
  const auto samples = micro_samples(3, 100);
  const SegmentationModel m = build_model(ModelConfig::micro(), 4);
  const MetricAccumulator plain = evaluate_model(m, samples);
  EXPECT_EQ(plain.total(), 3u * 16 * 16);
  const MetricAccumulator ones = evaluate_model(m, samples, {{1.0, 1.0}, false});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(ones.count(a, b), plain.count(a, b));

  MetricAccumulator manual(3);
  for (const auto& s : samples)
    manual.add(argmax_labels(model_forward(s.rgb, Tensor::zeros(s.depth.shape()), m).logits),
               s.labels);
  const MetricAccumulator rgb_only = evaluate_model(m, samples, {{1.0}, true});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(rgb_only.count(a, b), manual.count(a, b));
}

TEST(Train, TraceCsv) {
  const auto path = std::filesystem::temp_directory_path() / "asymfuse_trace.csv";
  TrainTrace t;
  t.steps.push_back({0, 0, 0.5, 1.25});
  t.steps.push_back({1, 0, 0.25, 1.0});
  write_trace_csv(path.string(), t);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,epoch,lr,loss");
  EXPECT_EQ(row, "0,0,0.5,1.25");
  std::filesystem::remove(path);
  expect_error([] { write_trace_csv("/nonexistent-dir/x.csv", TrainTrace{}); }, ErrorCode::kIo);
}

}  // namespace
}  // namespace asymfuse
