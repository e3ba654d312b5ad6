// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "asymfuse/error.hpp"
#include "asymfuse/metrics.hpp"
#include "asymfuse/ops.hpp"

namespace asymfuse {

double poly_lr(std::size_t iter, std::size_t max_iter, double base_lr, std::size_t warmup_iters) {
  require(max_iter > 0, ErrorCode::kInvalidArgument, "poly_lr needs max_iter > 0");
  if (iter > max_iter) {
    static bool warned = false;
    if (!warned) {
      std::cerr << "warning: poly_lr iteration " << iter << " past max_iter " << max_iter
                << "; using lr 0\n";
      warned = true;
    }
    return 0.0;
  }
  if (iter < warmup_iters)
    return base_lr * static_cast<double>(iter) / static_cast<double>(warmup_iters);
  if (max_iter <= warmup_iters) return base_lr;
  const double progress =
      static_cast<double>(iter - warmup_iters) / static_cast<double>(max_iter - warmup_iters);
  return base_lr * std::pow(1.0 - progress, 0.9);
}

OptimState make_optim_state(const ParameterList& params, const AdamWConfig& hyper) {
  OptimState s;
  s.hyper = hyper;
  for (const auto& p : params.items()) {
    s.first_moment.emplace_back(p.value.size(), 0.0);
    s.second_moment.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adamw_step(const ParameterList& params, OptimState& state, double lr) {
  const auto& items = params.items();
  require(state.first_moment.size() == items.size(), ErrorCode::kShapeMismatch,
          "optimizer state does not match the parameter list");
  for (const auto& p : items)
    require(p.value.has_grad(), ErrorCode::kMissingGrad, "parameter " + p.name + " has no gradient");
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  const double decay = 1.0 - lr * h.weight_decay;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor w = items[i].value;
    auto g = w.grad();
    auto v = w.mutable_values();
    auto& m1 = state.first_moment[i];
    auto& m2 = state.second_moment[i];
    require(m1.size() == v.size(), ErrorCode::kShapeMismatch,
            "optimizer state size mismatch for " + items[i].name);
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] *= decay;
      m1[j] = h.beta1 * m1[j] + (1.0 - h.beta1) * g[j];
      m2[j] = h.beta2 * m2[j] + (1.0 - h.beta2) * g[j] * g[j];
      v[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + h.eps);
    }
  }
}

Tensor cross_entropy(const Tensor& logits, const LabelGrid& labels, std::uint8_t ignore) {
  require(logits.rank() == 3, ErrorCode::kShapeMismatch, "cross_entropy expects (K,H,W) logits");
  const std::size_t k = logits.dim(0), hw = logits.dim(1) * logits.dim(2);
  require(labels.height == logits.dim(1) && labels.width == logits.dim(2),
          ErrorCode::kShapeMismatch, "labels " + std::to_string(labels.height) + "x" +
                                         std::to_string(labels.width) + " vs logits " +
                                         to_string(logits.shape()));
  auto x = logits.values();
  std::vector<double> prob(k * hw, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    const std::uint8_t t = labels.values[p];
    if (t == ignore) continue;
    if (t >= k) fail(ErrorCode::kInvalidArgument, "label " + std::to_string(t) + " out of range");
    double mx = x[p];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, x[c * hw + p]);
    if (!std::isfinite(mx)) fail(ErrorCode::kNonFinite, "non-finite logits in cross_entropy");
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      prob[c * hw + p] = std::exp(x[c * hw + p] - mx);
      z += prob[c * hw + p];
    }
    for (std::size_t c = 0; c < k; ++c) prob[c * hw + p] /= z;
    total += mx + std::log(z) - x[t * hw + p];
    ++counted;
  }
  require(counted > 0, ErrorCode::kInvalidArgument, "every pixel carries the ignore label");
  const double inv = 1.0 / static_cast<double>(counted);
  LabelGrid lab = labels;
  return make_result("cross_entropy", {}, {total * inv}, {logits},
                     [prob = std::move(prob), lab = std::move(lab), k, hw, inv,
                      ignore](BackwardContext& ctx) {
                       auto gx = ctx.input_grad(0);
                       if (gx.empty()) return;
                       const double g = ctx.out_grad()[0] * inv;
                       for (std::size_t p = 0; p < hw; ++p) {
                         const std::uint8_t t = lab.values[p];
                         if (t == ignore) continue;
                         for (std::size_t c = 0; c < k; ++c) gx[c * hw + p] += g * prob[c * hw + p];
                         gx[t * hw + p] -= g;
                       }
                     });
}

TrainTrace train_loop(SegmentationModel& model, const std::vector<Sample>& samples,
                      const TrainOptions& options) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "training set is empty");
  require(options.batch_size > 0, ErrorCode::kInvalidArgument, "batch size must be positive");
  const std::size_t n = samples.size();
  const std::size_t per_epoch = (n + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps =
      options.max_steps > 0 ? options.max_steps : options.epochs * per_epoch;
  require(total_steps > 0, ErrorCode::kInvalidArgument, "training has zero steps");

  ParameterList params = model.parameters();
  OptimState state = make_optim_state(params, options.optimizer);
  const FusionVariant variant = model.config.variant();
  TrainTrace trace;

  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(options.seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    MetricAccumulator acc(model.config.num_classes);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;

    for (std::size_t b = 0; b < per_epoch && step < total_steps; ++b) {
      const std::size_t lo = b * options.batch_size;
      const std::size_t hi = std::min(n, lo + options.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      std::sort(batch.begin(), batch.end());
      const double weight = 1.0 / static_cast<double>(batch.size());

      params.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t idx : batch) {
        Sample s = options.augment
                       ? augment_sample(samples[idx],
                                        derive_seed(derive_seed(options.seed, 2000 + epoch), idx),
                                        options.augmentation)
                       : samples[idx];
        Tensor depth = options.zero_depth ? Tensor::zeros(s.depth.shape()) : s.depth;
        ForwardResult fw;
        Tensor loss;
        try {
          fw = model_forward(s.rgb, depth, model, variant);
          loss = cross_entropy(fw.logits, s.labels);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNonFinite) throw;
          fail(ErrorCode::kDiverged,
               "non-finite values at step " + std::to_string(step) + ": " + e.what());
        }
        const double lv = loss.item();
        if (!std::isfinite(lv))
          fail(ErrorCode::kDiverged, "loss became non-finite at step " + std::to_string(step));
        batch_loss += lv * weight;
        backward(ops::scale(loss, weight));
        acc.add(argmax_labels(fw.logits.detach()), s.labels);
      }

      const double lr = poly_lr(step, total_steps, options.optimizer.base_lr, options.warmup_steps);
      adamw_step(params, state, lr);
      StepRecord rec{step, epoch, lr, batch_loss};
      trace.steps.push_back(rec);
      if (options.on_step) options.on_step(rec);
      epoch_loss += batch_loss;
      ++epoch_steps;
      ++step;
    }
    trace.epochs.push_back({epoch, epoch_loss / static_cast<double>(epoch_steps), acc.mean_iou(),
                            acc.pixel_accuracy()});
  }
  params.zero_grad();
  return trace;
}

MetricAccumulator evaluate_model(const SegmentationModel& model, const std::vector<Sample>& samples,
                                 const EvalOptions& options) {
  NoGradGuard no_grad;
  MetricAccumulator acc(model.config.num_classes);
  const bool single = options.scales.size() == 1 && options.scales[0] == 1.0;
  for (const auto& s : samples) {
    Tensor depth = options.zero_depth ? Tensor::zeros(s.depth.shape()) : s.depth;
    Tensor logits = single ? model_forward(s.rgb, depth, model).logits
                           : multi_scale_infer(s.rgb, depth, model, options.scales);
    acc.add(argmax_labels(logits), s.labels);
  }
  return acc;
}

void write_trace_csv(const std::string& path, const TrainTrace& trace) {
  std::ofstream out(path);
  require(out.is_open(), ErrorCode::kIo, "cannot write " + path);
  out.precision(17);
  out << "step,epoch,lr,loss\n";
  for (const auto& s : trace.steps)
    out << s.step << ',' << s.epoch << ',' << s.lr << ',' << s.loss << '\n';
}

}  // namespace asymfuse
