// Copyright 2026 The asymfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "asymfuse/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "asymfuse/error.hpp"

namespace asymfuse::ops {
namespace {

// C(m x n) = op(A) * op(B) + beta * C, with A stored a_rows x a_cols and B
// stored b_rows x b_cols, both row-major.
void gemm(const double* a, std::size_t a_rows, std::size_t a_cols, bool ta, const double* b,
          std::size_t b_rows, std::size_t b_cols, bool tb, double* c, double beta) {
  const std::size_t m = ta ? a_cols : a_rows;
  const std::size_t k = ta ? a_rows : a_cols;
  const std::size_t n = tb ? b_rows : b_cols;
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(a_cols), b, static_cast<int>(b_cols), beta, c,
              static_cast<int>(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
              " differ");
}

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.values()) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, std::string(op) + ": non-finite input");
  }
}

std::vector<double> copy_values(const Tensor& x) {
  auto v = x.values();
  return {v.begin(), v.end()};
}

template <typename F>
Tensor unary(const char* name, const Tensor& x, F&& value_and_slope) {
  const auto in = x.values();
  std::vector<double> out(in.size());
  std::vector<double> slope(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto [v, d] = value_and_slope(in[i]);
    out[i] = v;
    slope[i] = d;
  }
  return make_result(name, x.shape(), std::move(out), {x},
                     [slope = std::move(slope)](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * slope[i];
                     });
}

struct Interp {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};

Interp interpolation_table(std::size_t in, std::size_t out) {
  Interp t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.w_lo.resize(out);
  t.w_hi.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
    std::size_t i1 = std::min(i0 + 1, in - 1);
    double l1 = src - static_cast<double>(i0);
    t.lo[o] = i0;
    t.hi[o] = i1;
    t.w_lo[o] = 1.0 - l1;
    t.w_hi[o] = l1;
  }
  return t;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), ErrorCode::kShapeMismatch,
          "reshape " + to_string(x.shape()) + " -> " + to_string(shape) + " changes size");
  return make_result("reshape", std::move(shape), copy_values(x), {x}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto dx = ctx.input_grad(0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      auto d = ctx.input_grad(k);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto da = ctx.input_grad(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
    auto db = ctx.input_grad(1);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto av = a.values();
    auto bv = b.values();
    auto da = ctx.input_grad(0);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    auto db = ctx.input_grad(1);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out = copy_values(x);
  for (double& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto dx = ctx.input_grad(0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * factor;
  });
}

Tensor sum(const Tensor& x) {
  auto v = x.values();
  double total = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result("sum", {1}, {total}, {x}, [](BackwardContext& ctx) {
    const double g = ctx.out_grad()[0];
    for (double& d : ctx.input_grad(0)) d += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) {
    return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0};
  });
}

Tensor gelu(const Tensor& x) {
  return unary("gelu", x, [](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
    return std::pair{v * cdf, cdf + v * pdf};
  });
}

Tensor sigmoid(const Tensor& x) {
  require_finite(x, "sigmoid");
  return unary("sigmoid", x, [](double v) {
    double s;
    if (v >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      s = e / (1.0 + e);
    }
    return std::pair{s, s * (1.0 - s)};
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), ErrorCode::kInvalidArgument,
          "softmax: axis " + std::to_string(axis) + " invalid for " + to_string(x.shape()));
  require_finite(x, "softmax");
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = in[base];
      for (std::size_t a = 1; a < n; ++a) mx = std::max(mx, in[base + a * inner]);
      double total = 0.0;
      for (std::size_t a = 0; a < n; ++a) {
        const double e = std::exp(in[base + a * inner] - mx);
        out[base + a * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t a = 0; a < n; ++a) out[base + a * inner] *= inv;
    }
  }
  return make_result("softmax", s, std::move(out), {x},
                     [outer, inner, n](BackwardContext& ctx) {
                       auto y = ctx.out_values();
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < inner; ++i) {
                           const std::size_t base = o * n * inner + i;
                           double dot = 0.0;
                           for (std::size_t a = 0; a < n; ++a) {
                             dot += g[base + a * inner] * y[base + a * inner];
                           }
                           for (std::size_t a = 0; a < n; ++a) {
                             const std::size_t k = base + a * inner;
                             dx[k] += y[k] * (g[k] - dot);
                           }
                         }
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b, Transpose ta, Transpose tb) {
  require((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && (b.rank() == 2 || b.rank() == 3)),
          ErrorCode::kShapeMismatch,
          "matmul: unsupported ranks " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const bool batched = a.rank() == 3;
  const bool shared_b = b.rank() == 2;
  const std::size_t batch = batched ? a.dim(0) : 1;
  if (batched && !shared_b) {
    require(b.dim(0) == batch, ErrorCode::kShapeMismatch, "matmul: batch sizes differ");
  }
  const std::size_t ar = a.dim(a.rank() - 2), ac = a.dim(a.rank() - 1);
  const std::size_t br = b.dim(b.rank() - 2), bc = b.dim(b.rank() - 1);
  const bool tra = ta == Transpose::kYes, trb = tb == Transpose::kYes;
  const std::size_t m = tra ? ac : ar, k = tra ? ar : ac;
  const std::size_t kb = trb ? bc : br, n = trb ? br : bc;
  require(k == kb, ErrorCode::kShapeMismatch,
          "matmul: inner dimensions differ for " + to_string(a.shape()) + " x " +
              to_string(b.shape()));

  std::vector<double> out(batch * m * n);
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(ap + i * ar * ac, ar, ac, tra, bp + (shared_b ? 0 : i * br * bc), br, bc, trb,
         out.data() + i * m * n, 0.0);
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return make_result(
      "matmul", std::move(shape), std::move(out), {a, b},
      [a, b, batch, shared_b, ar, ac, br, bc, tra, trb, m, n](BackwardContext& ctx) {
        const double* g = ctx.out_grad().data();
        const double* ap = a.values().data();
        const double* bp = b.values().data();
        auto da = ctx.input_grad(0);
        auto db = ctx.input_grad(1);
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gi = g + i * m * n;
          const double* ai = ap + i * ar * ac;
          const double* bi = bp + (shared_b ? 0 : i * br * bc);
          if (!da.empty()) {
            double* dai = da.data() + i * ar * ac;
            if (!tra) {
              gemm(gi, m, n, false, bi, br, bc, !trb, dai, 1.0);
            } else {
              gemm(bi, br, bc, trb, gi, m, n, true, dai, 1.0);
            }
          }
          if (!db.empty()) {
            double* dbi = db.data() + (shared_b ? 0 : i * br * bc);
            if (!trb) {
              gemm(ai, ar, ac, !tra, gi, m, n, false, dbi, 1.0);
            } else {
              gemm(gi, m, n, true, ai, ar, ac, tra, dbi, 1.0);
            }
          }
        }
      });
}

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, ErrorCode::kShapeMismatch, "transpose needs a matrix");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {x}, [r, c](BackwardContext& ctx) {
    auto g = ctx.out_grad();
    auto dx = ctx.input_grad(0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[j * r + i];
  });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t pad) {
  require(x.rank() == 3 && kernel.rank() == 4, ErrorCode::kShapeMismatch,
          "conv2d expects x(Cin,H,W) and kernel(Cout,Cin,k,k)");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
  require(kernel.dim(1) == cin, ErrorCode::kShapeMismatch,
          "conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
              std::to_string(cin));
  require(kernel.dim(3) == k && k % 2 == 1, ErrorCode::kInvalidArgument,
          "conv2d: kernel must be square with odd size");
  require(stride >= 1, ErrorCode::kInvalidArgument, "conv2d: stride must be positive");
  require(h + 2 * pad >= k && w + 2 * pad >= k, ErrorCode::kShapeMismatch,
          "conv2d: non-positive output size for input " + to_string(x.shape()));
  if (bias.defined()) {
    require(bias.size() == cout, ErrorCode::kShapeMismatch, "conv2d: bias size mismatch");
  }
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (w + 2 * pad - k) / stride + 1;
  const std::size_t rows = cin * k * k, cols = oh * ow;

  // im2col
  auto xv = x.values();
  auto columns = std::make_shared<std::vector<double>>(rows * cols, 0.0);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = columns->data() + ((c * k + ky) * k + kx) * cols;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            row[oy * ow + ox] = xv[(c * h + static_cast<std::size_t>(iy)) * w +
                                   static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }

  std::vector<double> out(cout * cols);
  gemm(kernel.values().data(), cout, rows, false, columns->data(), rows, cols, false, out.data(),
       0.0);
  if (bias.defined()) {
    auto bv = bias.values();
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t p = 0; p < cols; ++p) out[o * cols + p] += bv[o];
  }

  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      "conv2d", {cout, oh, ow}, std::move(out), inputs,
      [kernel, columns, cin, h, w, cout, k, stride, pad, oh, ow, rows, cols,
       has_bias = bias.defined()](BackwardContext& ctx) {
        const double* g = ctx.out_grad().data();
        auto dk = ctx.input_grad(1);
        if (!dk.empty()) gemm(g, cout, cols, false, columns->data(), rows, cols, true, dk.data(), 1.0);
        if (has_bias) {
          auto db = ctx.input_grad(2);
          for (std::size_t o = 0; o < db.size(); ++o)
            for (std::size_t p = 0; p < cols; ++p) db[o] += g[o * cols + p];
        }
        auto dx = ctx.input_grad(0);
        if (dx.empty()) return;
        std::vector<double> dcols(rows * cols);
        gemm(kernel.values().data(), cout, rows, true, g, cout, cols, false, dcols.data(), 0.0);
        // col2im
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const double* row = dcols.data() + ((c * k + ky) * k + kx) * cols;
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  dx[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                      row[oy * ow + ox];
                }
              }
            }
          }
        }
      });
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require(x.rank() == 3, ErrorCode::kShapeMismatch, "bilinear_resize expects (C,H,W)");
  require(out_h >= 1 && out_w >= 1, ErrorCode::kInvalidArgument,
          "bilinear_resize: output size must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto ty = std::make_shared<Interp>(interpolation_table(h, out_h));
  auto tx = std::make_shared<Interp>(interpolation_table(w, out_w));
  auto in = x.values();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in.data() + ch * h * w;
    double* dst = out.data() + ch * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double* r0 = src + ty->lo[oy] * w;
      const double* r1 = src + ty->hi[oy] * w;
      const double wy0 = ty->w_lo[oy], wy1 = ty->w_hi[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = tx->lo[ox], x1 = tx->hi[ox];
        const double wx0 = tx->w_lo[ox], wx1 = tx->w_hi[ox];
        dst[oy * out_w + ox] =
            wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  return make_result("bilinear_resize", {c, out_h, out_w}, std::move(out), {x},
                     [ty, tx, c, h, w, out_h, out_w](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double* d = dx.data() + ch * h * w;
                         const double* gs = g.data() + ch * out_h * out_w;
                         for (std::size_t oy = 0; oy < out_h; ++oy) {
                           double* r0 = d + ty->lo[oy] * w;
                           double* r1 = d + ty->hi[oy] * w;
                           const double wy0 = ty->w_lo[oy], wy1 = ty->w_hi[oy];
                           for (std::size_t ox = 0; ox < out_w; ++ox) {
                             const double gv = gs[oy * out_w + ox];
                             const std::size_t x0 = tx->lo[ox], x1 = tx->hi[ox];
                             const double wx0 = tx->w_lo[ox], wx1 = tx->w_hi[ox];
                             r0[x0] += gv * wy0 * wx0;
                             r0[x1] += gv * wy0 * wx1;
                             r1[x0] += gv * wy1 * wx0;
                             r1[x1] += gv * wy1 * wx1;
                           }
                         }
                       }
                     });
}

Tensor adaptive_avg_pool_global(const Tensor& x) {
  require(x.rank() == 3, ErrorCode::kShapeMismatch, "adaptive_avg_pool_global expects (C,H,W)");
  const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
  auto in = x.values();
  std::vector<double> out(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    // Shifted by the first entry so constant planes pool to that constant exactly.
    const double* p = in.data() + ch * n;
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) dev += p[i] - p[0];
    out[ch] = p[0] + dev / static_cast<double>(n);
  }
  return make_result("adaptive_avg_pool", {c, 1, 1}, std::move(out), {x},
                     [c, n](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       const double inv = 1.0 / static_cast<double>(n);
                       for (std::size_t ch = 0; ch < c; ++ch)
                         for (std::size_t i = 0; i < n; ++i) dx[ch * n + i] += g[ch] * inv;
                     });
}

Tensor permute_channels(const Tensor& x, std::span<const std::size_t> source) {
  require(x.rank() >= 1, ErrorCode::kShapeMismatch, "permute_channels needs a channel axis");
  const std::size_t c = x.dim(0);
  require(source.size() == c, ErrorCode::kInvalidArgument,
          "permute_channels: permutation length mismatch");
  std::vector<bool> hit(c, false);
  for (std::size_t s : source) {
    require(s < c && !hit[s], ErrorCode::kInvalidArgument,
            "permute_channels: source is not a permutation");
    hit[s] = true;
  }
  const std::size_t plane = x.size() / c;
  auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < c; ++o) {
    std::copy_n(in.data() + source[o] * plane, plane, out.data() + o * plane);
  }
  return make_result("permute_channels", x.shape(), std::move(out), {x},
                     [src = std::vector<std::size_t>(source.begin(), source.end()),
                      plane](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       for (std::size_t o = 0; o < src.size(); ++o) {
                         for (std::size_t i = 0; i < plane; ++i)
                           dx[src[o] * plane + i] += g[o * plane + i];
                       }
                     });
}

Tensor channel_shuffle(const Tensor& x, std::size_t groups) {
  require(groups >= 1, ErrorCode::kInvalidArgument, "channel_shuffle: groups must be positive");
  const std::size_t c = x.dim(0);
  require(c % groups == 0, ErrorCode::kInvalidArgument,
          "channel_shuffle: " + std::to_string(c) + " channels not divisible by " +
              std::to_string(groups) + " groups");
  const std::size_t per_group = c / groups;
  std::vector<std::size_t> source(c);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < per_group; ++i) source[g + groups * i] = i + per_group * g;
  return permute_channels(x, source);
}

Tensor channel_unshuffle(const Tensor& x, std::size_t groups) {
  require(groups >= 1, ErrorCode::kInvalidArgument, "channel_unshuffle: groups must be positive");
  const std::size_t c = x.dim(0);
  require(c % groups == 0, ErrorCode::kInvalidArgument,
          "channel_unshuffle: channels not divisible by groups");
  const std::size_t per_group = c / groups;
  std::vector<std::size_t> source(c);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < per_group; ++i) source[i + per_group * g] = g + groups * i;
  return permute_channels(x, source);
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_channels: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    require(t == tail, ErrorCode::kShapeMismatch,
            "concat_channels: trailing shapes differ " + to_string(parts[0].shape()) + " vs " +
                to_string(p.shape()));
    total += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(total * numel(tail));
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(out.size());
    auto v = p.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  Shape shape{total};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return make_result("concat_channels", std::move(shape), std::move(out), parts,
                     [offsets](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       for (std::size_t k = 0; k < offsets.size(); ++k) {
                         auto d = ctx.input_grad(k);
                         for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offsets[k] + i];
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require(begin < end && end <= x.dim(0), ErrorCode::kInvalidArgument,
          "slice_channels: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
              ") for " + to_string(x.shape()));
  const std::size_t plane = x.size() / x.dim(0);
  auto in = x.values();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * plane),
                          in.begin() + static_cast<std::ptrdiff_t>(end * plane));
  Shape shape = x.shape();
  shape[0] = end - begin;
  return make_result("slice_channels", std::move(shape), std::move(out), {x},
                     [offset = begin * plane](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       for (std::size_t i = 0; i < g.size(); ++i) dx[offset + i] += g[i];
                     });
}

Tensor scale_channels(const Tensor& x, const Tensor& w) {
  const std::size_t c = x.dim(0);
  require(w.size() == c, ErrorCode::kShapeMismatch,
          "scale_channels: " + std::to_string(w.size()) + " weights for " + std::to_string(c) +
              " channels");
  const std::size_t plane = x.size() / c;
  auto xv = x.values();
  auto wv = w.values();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = xv[ch * plane + i] * wv[ch];
  return make_result("scale_channels", x.shape(), std::move(out), {x, w},
                     [x, w, c, plane](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto xv = x.values();
                       auto wv = w.values();
                       auto dx = ctx.input_grad(0);
                       if (!dx.empty()) {
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t i = 0; i < plane; ++i)
                             dx[ch * plane + i] += g[ch * plane + i] * wv[ch];
                       }
                       auto dw = ctx.input_grad(1);
                       if (!dw.empty()) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < plane; ++i)
                             acc += g[ch * plane + i] * xv[ch * plane + i];
                           dw[ch] += acc;
                         }
                       }
                     });
}

Tensor scale_positions(const Tensor& x, const Tensor& w) {
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.size() / c;
  require(w.size() == plane, ErrorCode::kShapeMismatch,
          "scale_positions: " + std::to_string(w.size()) + " weights for " +
              std::to_string(plane) + " positions");
  auto xv = x.values();
  auto wv = w.values();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = xv[ch * plane + i] * wv[i];
  return make_result("scale_positions", x.shape(), std::move(out), {x, w},
                     [x, w, c, plane](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto xv = x.values();
                       auto wv = w.values();
                       auto dx = ctx.input_grad(0);
                       if (!dx.empty()) {
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t i = 0; i < plane; ++i)
                             dx[ch * plane + i] += g[ch * plane + i] * wv[i];
                       }
                       auto dw = ctx.input_grad(1);
                       if (!dw.empty()) {
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t i = 0; i < plane; ++i)
                             dw[i] += g[ch * plane + i] * xv[ch * plane + i];
                       }
                     });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  const std::size_t c = x.dim(0);
  require(b.size() == c, ErrorCode::kShapeMismatch, "add_channel_bias: bias size mismatch");
  const std::size_t plane = x.size() / c;
  std::vector<double> out = copy_values(x);
  auto bv = b.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] += bv[ch];
  return make_result("add_channel_bias", x.shape(), std::move(out), {x, b},
                     [c, plane](BackwardContext& ctx) {
                       auto g = ctx.out_grad();
                       auto dx = ctx.input_grad(0);
                       for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
                       auto db = ctx.input_grad(1);
                       if (!db.empty()) {
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t i = 0; i < plane; ++i) db[ch] += g[ch * plane + i];
                       }
                     });
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           double eps) {
  const std::size_t c = x.dim(0);
  require(gamma.size() == c && beta.size() == c, ErrorCode::kShapeMismatch,
          "layer_norm_channels: affine parameters must have one entry per channel");
  const std::size_t plane = x.size() / c;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(plane);
  std::vector<double> out(xv.size());
  for (std::size_t p = 0; p < plane; ++p) {
    double mu = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) mu += xv[ch * plane + p];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = xv[ch * plane + p] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[p] = is;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double xh = (xv[ch * plane + p] - mu) * is;
      (*xhat)[ch * plane + p] = xh;
      out[ch * plane + p] = gv[ch] * xh + bv[ch];
    }
  }
  return make_result(
      "layer_norm_channels", x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat, inv_std, c, plane](BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gv = gamma.values();
        const auto& xh = *xhat;
        auto dgamma = ctx.input_grad(1);
        auto dbeta = ctx.input_grad(2);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t p = 0; p < plane; ++p) {
            const double gi = g[ch * plane + p];
            if (!dgamma.empty()) dgamma[ch] += gi * xh[ch * plane + p];
            if (!dbeta.empty()) dbeta[ch] += gi;
          }
        }
        auto dx = ctx.input_grad(0);
        if (dx.empty()) return;
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t p = 0; p < plane; ++p) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = g[ch * plane + p] * gv[ch];
            sum_d += d;
            sum_dx += d * xh[ch * plane + p];
          }
          const double is = (*inv_std)[p];
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = g[ch * plane + p] * gv[ch];
            dx[ch * plane + p] +=
                is * (d - inv_c * sum_d - xh[ch * plane + p] * inv_c * sum_dx);
          }
        }
      });
}

Tensor pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2 && weight.dim(1) == x.dim(0), ErrorCode::kShapeMismatch,
          "pointwise: weight " + to_string(weight.shape()) + " incompatible with input " +
              to_string(x.shape()));
  const std::size_t cin = x.dim(0), cout = weight.dim(0);
  const std::size_t plane = x.size() / cin;
  Tensor flat = x.rank() == 2 ? x : reshape(x, {cin, plane});
  Tensor y = matmul(weight, flat);
  if (bias.defined()) y = add_channel_bias(y, bias);
  if (x.rank() == 2) return y;
  Shape shape = x.shape();
  shape[0] = cout;
  return reshape(y, std::move(shape));
}

}  // namespace asymfuse::ops
