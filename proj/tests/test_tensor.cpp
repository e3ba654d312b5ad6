// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "asymfuse/ops.hpp"
#include "asymfuse/tensor.hpp"
#include "asymfuse/tensor_io.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

namespace asymfuse {
namespace {

using ops::Transpose;
using testing::expect_all_near;
using testing::expect_bit_equal;
using testing::expect_error;
using testing::kGradTol;
using testing::probe_loss;
using testing::random_tensor;

// ---- autodiff ----------------------------------------------------------------

TEST(Backward, SumOfSquares) {
  Tensor x({3}, {1, 2, 3}, true);
  backward(ops::sum(ops::mul(x, x)));
  expect_all_near(x.grad(), std::vector<double>{2, 4, 6}, 0.0);
}

TEST(Backward, SigmoidSlopeAtZero) {
  Tensor x({1}, {0.0}, true);
  backward(ops::sum(ops::sigmoid(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Backward, LeafGradientsAccumulateUntilZeroed) {
  Tensor x({2}, {1.5, -2.0}, true);
  backward(ops::sum(ops::scale(x, 3.0)));
  backward(ops::sum(ops::scale(x, 3.0)));
  expect_all_near(x.grad(), std::vector<double>{6, 6}, 0.0);
  x.zero_grad();
  expect_all_near(x.grad(), std::vector<double>{0, 0}, 0.0);
}

TEST(Backward, SharedInputSumsBothPaths) {
  Tensor x({1}, {2.0}, true);
  Tensor y = ops::add(ops::mul(x, x), ops::scale(x, 5.0));
  backward(ops::sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 2.0 + 5.0);
}

TEST(Backward, IntermediateGradientsResetPerCall) {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor h = ops::scale(x, 2.0);
  Tensor loss = ops::sum(h);
  backward(loss);
  backward(loss);
  expect_all_near(h.grad(), std::vector<double>{1, 1}, 0.0);
  expect_all_near(x.grad(), std::vector<double>{4, 4}, 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x({2}, {1, 2}, true);
  expect_error([&] { backward(ops::scale(x, 2.0)); }, ErrorCode::kShapeMismatch);
}

TEST(Backward, DetachedLossIsFlagged) {
  Tensor x({2}, {1, 2}, false);
  BackwardStats stats = backward(ops::sum(x));
  EXPECT_TRUE(stats.detached);
  Tensor p({2}, {1, 2}, true);
  EXPECT_FALSE(backward(ops::sum(p)).detached);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Tensor x({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = ops::scale(x, 2.0);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Backward, OperationResultsAreImmutable) {
  Tensor x({2}, {1, 2}, true);
  Tensor y = ops::scale(x, 2.0);
  expect_error([&] { y.mutable_values(); }, ErrorCode::kInvalidArgument);
  EXPECT_NO_THROW(x.mutable_values());
}

TEST(Backward, MissingGradientIsReported) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_FALSE(x.has_grad());
  expect_error([&] { x.grad(); }, ErrorCode::kMissingGrad);
}

TEST(Graph, RecordsOpsInExecutionOrder) {
  Tensor x({2}, {1, 2}, true);
  Tensor loss = ops::sum(ops::relu(ops::scale(x, 2.0)));
  Graph g = Graph::trace(loss);
  const auto names = g.op_names();
  ASSERT_EQ(names.size(), 4u);
  EXPECT_EQ(names[1], "scale");
  EXPECT_EQ(names[2], "relu");
  EXPECT_EQ(names[3], "sum");
  const auto seq = g.sequence();
  EXPECT_TRUE(std::is_sorted(seq.begin(), seq.end()));
}

TEST(TensorBasics, ShapeValidation) {
  expect_error([] { Tensor({2, 2}, {1, 2, 3}); }, ErrorCode::kShapeMismatch);
  Tensor t = Tensor::full({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
  expect_error([&] { t.item(); }, ErrorCode::kShapeMismatch);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.0).item(), 4.0);
}

TEST(TensorBasics, DetachAndClone) {
  Tensor x({2}, {1, 2}, true);
  Tensor y = ops::scale(x, 3.0);
  Tensor d = y.detach();
  EXPECT_FALSE(d.requires_grad());
  expect_bit_equal(d.values(), y.values());
  Tensor c = x.clone(true);
  c.mutable_values()[0] = 9.0;
  EXPECT_DOUBLE_EQ(x[0], 1.0);
}

// ---- forward oracles ------------------------------------------------------------

TEST(Ops, MatmulMatchesLoopWithTransposes) {
  for (auto ta : {Transpose::kNo, Transpose::kYes}) {
    for (auto tb : {Transpose::kNo, Transpose::kYes}) {
      const std::size_t m = 3, k = 4, n = 5;
      Tensor a = random_tensor(ta == Transpose::kNo ? Shape{m, k} : Shape{k, m}, 1);
      Tensor b = random_tensor(tb == Transpose::kNo ? Shape{k, n} : Shape{n, k}, 2);
      Tensor c = ops::matmul(a, b, ta, tb);
      ASSERT_EQ(c.shape(), (Shape{m, n}));
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t q = 0; q < k; ++q) {
            const double av = ta == Transpose::kNo ? a[i * k + q] : a[q * m + i];
            const double bv = tb == Transpose::kNo ? b[q * n + j] : b[j * k + q];
            s += av * bv;
          }
          EXPECT_NEAR(c[i * n + j], s, 1e-12);
        }
      }
    }
  }
}

TEST(Ops, BatchedMatmulSharesRightOperand) {
  Tensor a = random_tensor({2, 3, 4}, 3);
  Tensor b = random_tensor({4, 2}, 4);
  Tensor c = ops::matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 2}));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t q = 0; q < 4; ++q) s += a[t * 12 + i * 4 + q] * b[q * 2 + j];
        EXPECT_NEAR(c[t * 6 + i * 2 + j], s, 1e-12);
      }
  expect_error([&] { ops::matmul(random_tensor({3, 4}, 1), random_tensor({3, 4}, 2)); },
               ErrorCode::kShapeMismatch);
}

TEST(Ops, Conv2dMatchesDirectLoop) {
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t cin = 2, cout = 3, k = 3, h = 7, w = 6, pad = 1;
    Tensor x = random_tensor({cin, h, w}, 5);
    Tensor kern = random_tensor({cout, cin, k, k}, 6);
    Tensor bias = random_tensor({cout}, 7);
    Tensor y = ops::conv2d(x, kern, bias, stride, pad);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{cout, oh, ow}));
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                s += kern[((o * cin + c) * k + ky) * k + kx] *
                     x[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
              }
          EXPECT_NEAR(y[(o * oh + oy) * ow + ox], s, 1e-12);
        }
  }
}

TEST(Ops, Conv2dRejectsEvenKernel) {
  expect_error(
      [] { ops::conv2d(random_tensor({1, 4, 4}, 1), random_tensor({1, 1, 2, 2}, 2), {}, 1, 0); },
      ErrorCode::kInvalidArgument);
}

TEST(Ops, BilinearHalfPixelUpsample) {
  // 2x2 -> 4x4 with half-pixel centers: rows interpolate 1 -> 2 as 1, 1.25, 1.75, 2.
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ops::bilinear_resize(x, 4, 4);
  const std::vector<double> expected{1.0, 1.25, 1.75, 2.0, 1.5, 1.75, 2.25, 2.5,
                                     2.5, 2.75, 3.25, 3.5, 3.0, 3.25, 3.75, 4.0};
  expect_all_near(y.values(), expected, 1e-15);
}

TEST(Ops, BilinearMatchesHalfPixelOracle) {
  const std::size_t h = 5, w = 7, oh = 3, ow = 11;
  Tensor x = random_tensor({2, h, w}, 8);
  Tensor y = ops::bilinear_resize(x, oh, ow);
  auto src = [](std::size_t o, std::size_t in, std::size_t out) {
    double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) -
               0.5;
    return std::max(s, 0.0);
  };
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double sy = src(oy, h, oh), sx = src(ox, w, ow);
        const std::size_t y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
        const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
        auto at = [&](std::size_t yy, std::size_t xx) { return x[(c * h + yy) * w + xx]; };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                         fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        EXPECT_NEAR(y[(c * oh + oy) * ow + ox], v, 1e-12);
      }
}

TEST(Ops, BilinearSameSizeIsIdentity) {
  Tensor x = random_tensor({3, 4, 5}, 9);
  expect_all_near(ops::bilinear_resize(x, 4, 5).values(), x.values(), 1e-15);
}

TEST(Ops, LayerNormMatchesPerPositionOracle) {
  Tensor x = random_tensor({4, 2, 3}, 10);
  Tensor gamma = random_tensor({4}, 11);
  Tensor beta = random_tensor({4}, 12);
  Tensor y = ops::layer_norm_channels(x, gamma, beta);
  for (std::size_t p = 0; p < 6; ++p) {
    double mu = 0.0;
    for (std::size_t c = 0; c < 4; ++c) mu += x[c * 6 + p] / 4.0;
    double var = 0.0;
    for (std::size_t c = 0; c < 4; ++c) var += (x[c * 6 + p] - mu) * (x[c * 6 + p] - mu) / 4.0;
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(y[c * 6 + p], gamma[c] * (x[c * 6 + p] - mu) / std::sqrt(var + 1e-6) + beta[c],
                  1e-12);
  }
}

TEST(Ops, GeluMatchesErfForm) {
  Tensor x({4}, {-2.0, -0.5, 0.0, 1.3});
  Tensor y = ops::gelu(x);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(y[i], 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0))), 1e-15);
}

TEST(Ops, ElementwiseShapeMismatch) {
  expect_error([] { ops::add(Tensor::zeros({2}), Tensor::zeros({3})); },
               ErrorCode::kShapeMismatch);
  expect_error([] { ops::reshape(Tensor::zeros({2, 3}), {4}); }, ErrorCode::kShapeMismatch);
}

// ---- properties ---------------------------------------------------------------------

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Tensor x = random_tensor({3, 5, 4}, 13, false, -4.0, 4.0);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor y = ops::softmax(x, axis);
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= s[i];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        double total = 0.0;
        for (std::size_t a = 0; a < s[axis]; ++a) total += y[(o * s[axis] + a) * inner + i];
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
  }
  std::vector<double> shifted(x.values().begin(), x.values().end());
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t j = 0; j < 4; ++j) shifted[r * 4 + j] += 100.0 + static_cast<double>(r);
  expect_all_near(ops::softmax(Tensor(x.shape(), shifted), 2).values(),
                  ops::softmax(x, 2).values(), 1e-9);
}

TEST(Softmax, NonFiniteInputRejected) {
  Tensor x({2}, {1.0, std::nan("")});
  expect_error([&] { ops::softmax(x, 0); }, ErrorCode::kNonFinite);
  expect_error([&] { ops::sigmoid(x); }, ErrorCode::kNonFinite);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tensor y = ops::softmax(Tensor({3}, {1000.0, 0.0, -1000.0}), 0);
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(y[2]));
}

TEST(ChannelShuffle, InverseAndMultiset) {
  for (std::size_t groups : {1u, 2u, 3u, 6u}) {
    Tensor x = random_tensor({12, 2, 2}, 14);
    Tensor s = ops::channel_shuffle(x, groups);
    expect_bit_equal(ops::channel_unshuffle(s, groups).values(), x.values());
    std::vector<double> a(x.values().begin(), x.values().end());
    std::vector<double> b(s.values().begin(), s.values().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    expect_bit_equal(a, b);
  }
  expect_error([] { ops::channel_shuffle(Tensor::zeros({6, 1, 1}), 4); },
               ErrorCode::kInvalidArgument);
}

TEST(ChannelShuffle, TwoGroupsInterleave) {
  Tensor x({6, 1}, {0, 1, 2, 10, 11, 12});
  Tensor s = ops::channel_shuffle(x, 2);
  expect_all_near(s.values(), std::vector<double>{0, 10, 1, 11, 2, 12}, 0.0);
}

TEST(AvgPool, ConstantMapReturnsConstantExactly) {
  Tensor x = Tensor::full({3, 5, 7}, 0.3);
  Tensor p = ops::adaptive_avg_pool_global(x);
  ASSERT_EQ(p.shape(), (Shape{3, 1, 1}));
  for (double v : p.values()) EXPECT_EQ(v, 0.3);
}

TEST(Ops, DeterministicAcrossCalls) {
  Tensor x = random_tensor({2, 6, 6}, 15);
  Tensor k = random_tensor({3, 2, 3, 3}, 16);
  auto run = [&] {
    return ops::softmax(ops::gelu(ops::conv2d(x, k, {}, 2, 1)), 0);
  };
  expect_bit_equal(run().values(), run().values());
}

// ---- gradient checks ---------------------------------------------------------------------

class PrimitiveGrad : public ::testing::TestWithParam<testing::GradCase> {};

TEST_P(PrimitiveGrad, MatchesCentralDifferences) {
  std::vector<NamedInput> inputs;
  std::function<Tensor()> loss;
  GetParam().build(inputs, loss);
  const GradCheckResult r = gradcheck(loss, inputs);
  EXPECT_GT(r.entries_checked, 0u);
  EXPECT_LT(r.max_rel_error, kGradTol)
      << r.worst.tensor << "[" << r.worst.index << "] analytic " << r.worst.analytic
      << " numeric " << r.worst.numeric;
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGrad,
                         ::testing::ValuesIn(testing::primitive_grad_cases()),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(GradCheck, DetectsWrongGradient) {
  // An op whose backward is deliberately off by a factor of two.
  Tensor x = random_tensor({3}, 40, true);
  auto bad = [x] {
    auto v = x.values();
    std::vector<double> out(v.begin(), v.end());
    for (double& o : out) o *= 3.0;
    return ops::sum(make_result("bad", {3}, out, {x}, [](BackwardContext& ctx) {
      auto g = ctx.out_grad();
      auto dx = ctx.input_grad(0);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 6.0 * g[i];
    }));
  };
  EXPECT_GT(gradcheck(bad, {{"x", x}}).max_rel_error, 0.3);
}

// ---- ATSR files ------------------------------------------------------------------------------

TEST(TensorIo, RoundTripIsBitExact) {
  Tensor x = random_tensor({2, 3, 4}, 41);
  std::stringstream buf;
  write_tensor(buf, x);
  Tensor y = read_tensor(buf);
  EXPECT_EQ(y.shape(), x.shape());
  expect_bit_equal(y.values(), x.values());
}

TEST(TensorIo, HeaderLayout) {
  std::stringstream buf;
  write_tensor(buf, Tensor({2, 1}, {1.0, 2.0}));
  const std::string s = buf.str();
  ASSERT_EQ(s.size(), 4u + 1 + 1 + 2 * 4 + 2 * 8);
  EXPECT_EQ(s.substr(0, 4), "ATSR");
  EXPECT_EQ(static_cast<int>(s[4]), 1);
  EXPECT_EQ(static_cast<int>(s[5]), 2);
  EXPECT_EQ(static_cast<unsigned char>(s[6]), 2u);
  EXPECT_EQ(static_cast<unsigned char>(s[10]), 1u);
}

TEST(TensorIo, MalformedInputsHaveDistinctCodes) {
  std::stringstream good;
  write_tensor(good, random_tensor({3, 3}, 42));
  const std::string bytes = good.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream s1(bad_magic);
  expect_error([&] { read_tensor(s1); }, ErrorCode::kFormat);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  std::stringstream s2(bad_version);
  expect_error([&] { read_tensor(s2); }, ErrorCode::kVersion);

  std::stringstream s3(bytes.substr(0, bytes.size() - 5));
  expect_error([&] { read_tensor(s3); }, ErrorCode::kTruncated);
}

}  // namespace
}  // namespace asymfuse
