/* Copyright 2026 The FMDConv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fmdconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fmdconv {

namespace {

[[noreturn]] void shape_fail(const std::string& what) { throw ShapeError(what); }

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    shape_fail(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
               ", got shape " + shape_to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c_in, h, w;
  std::size_t c_out, c_in_g, k;
  std::size_t ho, wo;
  std::size_t groups, c_out_g;
  std::size_t patch() const { return c_in_g * k * k; }
  std::size_t plane() const { return ho * wo; }
  bool pointwise(const Conv2dParams& p) const { return k == 1 && p.stride == 1 && p.padding == 0; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, const Conv2dParams& p) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  if (p.stride == 0) shape_fail("conv2d: stride must be positive");
  if (p.groups == 0) shape_fail("conv2d: groups must be positive");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c_in = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.c_out = w.dim(0);
  g.c_in_g = w.dim(1);
  g.k = w.dim(2);
  g.groups = p.groups;
  if (w.dim(3) != g.k) {
    shape_fail("conv2d: kernel must be square, got " + shape_to_string(w.shape()));
  }
  if (g.c_in % p.groups != 0) {
    shape_fail("conv2d: input channels (dim 1) = " + std::to_string(g.c_in) +
               " not divisible by groups = " + std::to_string(p.groups));
  }
  if (g.c_out % p.groups != 0) {
    shape_fail("conv2d: output channels (weight dim 0) = " + std::to_string(g.c_out) +
               " not divisible by groups = " + std::to_string(p.groups));
  }
  if (g.c_in / p.groups != g.c_in_g) {
    shape_fail("conv2d: weight dim 1 = " + std::to_string(g.c_in_g) + " but input channels / groups = " +
               std::to_string(g.c_in / p.groups));
  }
  g.c_out_g = g.c_out / p.groups;
  g.ho = conv_output_size(g.h, g.k, p.stride, p.padding);
  g.wo = conv_output_size(g.w, g.k, p.stride, p.padding);
  return g;
}

// col[(c*k + ky)*k + kx][oy*wo + ox] = x[c][oy*s + ky - p][ox*s + kx - p]
void im2col(const double* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, double* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = x + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          double* row = dst + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t channels, std::size_t h, std::size_t w,
                std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
                std::size_t wo, double* x) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* plane = x + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* row = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            row[static_cast<std::size_t>(ix)] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

// c[m][j] += sum_r a[m][r] * b[r][j], r ascending for every element.
void gemm_accumulate(std::size_t m_rows, std::size_t depth, std::size_t cols, const double* a,
                     const double* b, double* c) {
  std::size_t m = 0;
  for (; m + 4 <= m_rows; m += 4) {
    double* c0 = c + m * cols;
    double* c1 = c0 + cols;
    double* c2 = c1 + cols;
    double* c3 = c2 + cols;
    for (std::size_t r = 0; r < depth; ++r) {
      const double a0 = a[m * depth + r];
      const double a1 = a[(m + 1) * depth + r];
      const double a2 = a[(m + 2) * depth + r];
      const double a3 = a[(m + 3) * depth + r];
      const double* br = b + r * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        const double bv = br[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
  }
  for (; m < m_rows; ++m) {
    double* cm = c + m * cols;
    for (std::size_t r = 0; r < depth; ++r) {
      const double av = a[m * depth + r];
      const double* br = b + r * cols;
      for (std::size_t j = 0; j < cols; ++j) cm[j] += av * br[j];
    }
  }
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

std::size_t broadcast_inner(const Tensor& x, const Tensor& a) {
  if (a.rank() != x.rank()) {
    shape_fail("mul_broadcast: rank mismatch " + shape_to_string(x.shape()) + " vs " +
               shape_to_string(a.shape()));
  }
  std::size_t axis = 0;
  while (axis < x.rank() && a.dim(axis) == x.dim(axis)) ++axis;
  std::size_t inner = 1;
  for (std::size_t i = axis; i < x.rank(); ++i) {
    if (a.dim(i) != 1) {
      shape_fail("mul_broadcast: dimension " + std::to_string(i) + " of attention shape " +
                 shape_to_string(a.shape()) + " is neither 1 nor equal to input shape " +
                 shape_to_string(x.shape()));
    }
    inner *= x.dim(i);
  }
  return inner;
}

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ValueError("temperature must be positive and finite, got " + std::to_string(t));
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw ShapeError("stride must be positive");
  if (kernel == 0 || kernel > in + 2 * padding) {
    throw ShapeError("kernel size " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv2dParams& p) {
  const ConvGeometry g = conv_geometry(x, w, p);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.c_out)) {
    shape_fail("conv2d: bias shape " + shape_to_string(bias->shape()) + " != [" +
               std::to_string(g.c_out) + "]");
  }
  Tensor out(Shape{g.n, g.c_out, g.ho, g.wo}, 0.0);
  const std::size_t patch = g.patch();
  const std::size_t plane = g.plane();
  const bool pointwise = g.pointwise(p);
  std::vector<double> col(pointwise ? 0 : patch * plane);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const double* xg = x.data() + (n * g.c_in + grp * g.c_in_g) * g.h * g.w;
      const double* cols = xg;
      if (!pointwise) {
        im2col(xg, g.c_in_g, g.h, g.w, g.k, p.stride, p.padding, g.ho, g.wo, col.data());
        cols = col.data();
      }
      double* og = out.data() + (n * g.c_out + grp * g.c_out_g) * plane;
      gemm_accumulate(g.c_out_g, patch, plane, w.data() + grp * g.c_out_g * patch, cols, og);
      if (bias) {
        for (std::size_t co = 0; co < g.c_out_g; ++co) {
          const double bv = (*bias)[grp * g.c_out_g + co];
          double* row = og + co * plane;
          for (std::size_t j = 0; j < plane; ++j) row[j] += bv;
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, bool has_bias,
                            const Conv2dParams& p, const Tensor& grad_out, bool want_grad_x) {
  const ConvGeometry g = conv_geometry(x, w, p);
  const Shape out_shape{g.n, g.c_out, g.ho, g.wo};
  if (grad_out.shape() != out_shape) {
    shape_fail("conv2d_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
               " != forward output shape " + shape_to_string(out_shape));
  }
  Conv2dGrads grads;
  grads.grad_w = zeros_like(w);
  if (has_bias) grads.grad_b = Tensor(Shape{g.c_out}, 0.0);
  if (want_grad_x) grads.grad_x = zeros_like(x);

  const std::size_t patch = g.patch();
  const std::size_t plane = g.plane();
  const bool pointwise = g.pointwise(p);
  std::vector<double> col(pointwise ? 0 : patch * plane);
  std::vector<double> grad_col(want_grad_x ? patch * plane : 0);

  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const double* xg = x.data() + (n * g.c_in + grp * g.c_in_g) * g.h * g.w;
      const double* cols = xg;
      if (!pointwise) {
        im2col(xg, g.c_in_g, g.h, g.w, g.k, p.stride, p.padding, g.ho, g.wo, col.data());
        cols = col.data();
      }
      const double* go = grad_out.data() + (n * g.c_out + grp * g.c_out_g) * plane;
      const double* wg = w.data() + grp * g.c_out_g * patch;
      double* gw = grads.grad_w.data() + grp * g.c_out_g * patch;

      // Per-(sample, group) partial sums are formed from zero and then added,
      // so a batch-folded call reproduces the per-sample accumulation.
      for (std::size_t co = 0; co < g.c_out_g; ++co) {
        const double* gorow = go + co * plane;
        for (std::size_t r = 0; r < patch; ++r) {
          const double* crow = cols + r * plane;
          double acc = 0.0;
          for (std::size_t j = 0; j < plane; ++j) acc += gorow[j] * crow[j];
          gw[co * patch + r] += acc;
        }
        if (has_bias) {
          double acc = 0.0;
          for (std::size_t j = 0; j < plane; ++j) acc += gorow[j];
          grads.grad_b[grp * g.c_out_g + co] += acc;
        }
      }

      if (want_grad_x) {
        std::fill(grad_col.begin(), grad_col.end(), 0.0);
        for (std::size_t co = 0; co < g.c_out_g; ++co) {
          const double* gorow = go + co * plane;
          for (std::size_t r = 0; r < patch; ++r) {
            const double wv = wg[co * patch + r];
            double* gc = grad_col.data() + r * plane;
            for (std::size_t j = 0; j < plane; ++j) gc[j] += wv * gorow[j];
          }
        }
        double* gx = grads.grad_x.data() + (n * g.c_in + grp * g.c_in_g) * g.h * g.w;
        if (pointwise) {
          for (std::size_t j = 0; j < patch * plane; ++j) gx[j] += grad_col[j];
        } else {
          col2im_add(grad_col.data(), g.c_in_g, g.h, g.w, g.k, p.stride, p.padding, g.ho, g.wo,
                     gx);
        }
      }
    }
  }
  return grads;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out(Shape{n, c}, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    const double* src = x.data() + i * plane;
    double acc = 0.0;
    for (std::size_t j = 0; j < plane; ++j) acc += src[j];
    out[i] = acc / static_cast<double>(plane);
  }
  return out;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor* b) {
  require_rank(x, 2, "dense", "input");
  require_rank(w, 2, "dense", "weight");
  const std::size_t n = x.dim(0), d_in = x.dim(1), d_out = w.dim(0);
  if (w.dim(1) != d_in) {
    shape_fail("dense: weight dim 1 = " + std::to_string(w.dim(1)) + " != input dim 1 = " +
               std::to_string(d_in));
  }
  if (b && (b->rank() != 1 || b->dim(0) != d_out)) {
    shape_fail("dense: bias shape " + shape_to_string(b->shape()) + " != [" +
               std::to_string(d_out) + "]");
  }
  Tensor out(Shape{n, d_out}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * d_in;
    for (std::size_t o = 0; o < d_out; ++o) {
      const double* wr = w.data() + o * d_in;
      double acc = 0.0;
      for (std::size_t j = 0; j < d_in; ++j) acc += xr[j] * wr[j];
      out[i * d_out + o] = acc + (b ? (*b)[o] : 0.0);
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  if (a.dim(1) != b.dim(0)) {
    shape_fail("matmul: lhs dim 1 = " + std::to_string(a.dim(1)) + " != rhs dim 0 = " +
               std::to_string(b.dim(0)));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out(Shape{n, m}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t r = 0; r < k; ++r) {
      const double av = a[i * k + r];
      const double* br = b.data() + r * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += av * br[j];
    }
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v < 0.0 ? 0.0 : v;
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) {
    // Split on sign so exp never overflows.
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

Tensor mul_broadcast(const Tensor& x, const Tensor& a) {
  const std::size_t inner = broadcast_inner(x, a);
  Tensor out = x;
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] *= a[i / inner];
  return out;
}

namespace {

Tensor softmax_rows(const Tensor& z, double inv_t, bool scale) {
  const std::size_t k = z.shape().back();
  const std::size_t rows = z.numel() / k;
  Tensor out(z.shape(), 0.0);
  std::vector<double> s(k);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * k;
    double* o = out.data() + r * k;
    for (std::size_t j = 0; j < k; ++j) s[j] = scale ? zr[j] * inv_t : zr[j];
    const double m = *std::max_element(s.begin(), s.end());
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      o[j] = std::exp(s[j] - m);
      total += o[j];
    }
    for (std::size_t j = 0; j < k; ++j) o[j] /= total;
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& z) { return softmax_rows(z, 1.0, false); }

Tensor softmax_temperature(const Tensor& z, double temperature) {
  check_temperature(temperature);
  if (temperature == 1.0) return softmax_rows(z, 1.0, false);
  return softmax_rows(z, 1.0 / temperature, true);
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  require_rank(x, 4, "avg_pool2d", "input");
  if (window == 0 || x.dim(2) % window != 0 || x.dim(3) % window != 0) {
    shape_fail("avg_pool2d: spatial dims " + shape_to_string(x.shape()) +
               " not divisible by window " + std::to_string(window));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / window, wo = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  Tensor out(Shape{x.dim(0), x.dim(1), ho, wo}, 0.0);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* src = x.data() + pl * h * w;
    double* dst = out.data() + pl * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            acc += src[(oy * window + dy) * w + ox * window + dx];
          }
        }
        dst[oy * wo + ox] = acc * inv;
      }
    }
  }
  return out;
}

namespace {

void check_bn(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, const char* op) {
  require_rank(x, 4, op, "x");
  const Shape c{x.dim(1)};
  if (gamma.shape() != c || beta.shape() != c) {
    shape_fail(std::string(op) + ": gamma/beta must be [" + std::to_string(x.dim(1)) + "], got " +
               shape_to_string(gamma.shape()) + " and " + shape_to_string(beta.shape()));
  }
  if (!(eps > 0.0)) throw ValueError(std::string(op) + ": eps must be positive");
}

}  // namespace

ChannelStats channel_stats(const Tensor& x) {
  require_rank(x, 4, "channel_stats", "x");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double m = static_cast<double>(n * plane);
  ChannelStats s{Tensor(Shape{c}, 0.0), Tensor(Shape{c}, 0.0)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = x.data() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    }
    const double mean = acc / m;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = x.data() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    s.mean[ch] = mean;
    s.var[ch] = sq / m;
  }
  return s;
}

Tensor batch_norm_inference(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                            const Tensor& beta, double eps) {
  check_bn(x, gamma, beta, eps, "batch_norm_inference");
  if (mean.shape() != gamma.shape() || var.shape() != gamma.shape()) {
    shape_fail("batch_norm_inference: mean/var must match the channel count");
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(var[ch] + eps);
      const double* src = x.data() + (i * c + ch) * plane;
      double* dst = y.data() + (i * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) dst[j] = gamma[ch] * ((src[j] - mean[ch]) * inv) + beta[ch];
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

Var conv2d(Tape& tape, Var x, Var w, std::optional<Var> b, const Conv2dParams& p) {
  const Tensor* bias = b ? &tape.value(*b) : nullptr;
  Tensor out = conv2d(tape.value(x), tape.value(w), bias, p);
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const bool has_bias = b.has_value();
  return tape.record("conv2d", std::move(out), std::move(inputs),
                     [p, has_bias](const BackwardArgs& a) {
                       Conv2dGrads g = conv2d_backward(*a.inputs[0], *a.inputs[1], has_bias, p,
                                                       a.grad_out, a.needs_grad[0]);
                       std::vector<Tensor> res;
                       res.push_back(std::move(g.grad_x));
                       res.push_back(std::move(g.grad_w));
                       if (has_bias) res.push_back(std::move(g.grad_b));
                       return res;
                     });
}

Var reshape(Tape& tape, Var x, Shape shape) {
  Tensor out = tape.value(x).reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {x}, [](const BackwardArgs& a) {
    return std::vector<Tensor>{a.grad_out.reshaped(a.inputs[0]->shape())};
  });
}

Var global_avg_pool(Tape& tape, Var x) {
  Tensor out = global_avg_pool(tape.value(x));
  return tape.record("global_avg_pool", std::move(out), {x}, [](const BackwardArgs& a) {
    const Tensor& in = *a.inputs[0];
    const std::size_t plane = in.dim(2) * in.dim(3);
    const double inv = 1.0 / static_cast<double>(plane);
    Tensor gx(in.shape(), 0.0);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = a.grad_out[i / plane] * inv;
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var dense(Tape& tape, Var x, Var w, std::optional<Var> b) {
  const Tensor* bias = b ? &tape.value(*b) : nullptr;
  Tensor out = dense(tape.value(x), tape.value(w), bias);
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  const bool has_bias = b.has_value();
  return tape.record("dense", std::move(out), std::move(inputs),
                     [has_bias](const BackwardArgs& a) {
                       const Tensor& xv = *a.inputs[0];
                       const Tensor& wv = *a.inputs[1];
                       const std::size_t n = xv.dim(0), d_in = xv.dim(1), d_out = wv.dim(0);
                       const Tensor& go = a.grad_out;
                       std::vector<Tensor> res(a.inputs.size());
                       if (a.needs_grad[0]) {
                         Tensor gx(xv.shape(), 0.0);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t o = 0; o < d_out; ++o) {
                             const double gv = go[i * d_out + o];
                             const double* wr = wv.data() + o * d_in;
                             double* gr = gx.data() + i * d_in;
                             for (std::size_t j = 0; j < d_in; ++j) gr[j] += gv * wr[j];
                           }
                         }
                         res[0] = std::move(gx);
                       }
                       if (a.needs_grad[1]) {
                         Tensor gw(wv.shape(), 0.0);
                         for (std::size_t i = 0; i < n; ++i) {
                           const double* xr = xv.data() + i * d_in;
                           for (std::size_t o = 0; o < d_out; ++o) {
                             const double gv = go[i * d_out + o];
                             double* gr = gw.data() + o * d_in;
                             for (std::size_t j = 0; j < d_in; ++j) gr[j] += gv * xr[j];
                           }
                         }
                         res[1] = std::move(gw);
                       }
                       if (has_bias && a.needs_grad[2]) {
                         Tensor gb(Shape{d_out}, 0.0);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t o = 0; o < d_out; ++o) gb[o] += go[i * d_out + o];
                         }
                         res[2] = std::move(gb);
                       }
                       return res;
                     });
}

Var matmul(Tape& tape, Var a, Var b) {
  Tensor out = matmul(tape.value(a), tape.value(b));
  return tape.record("matmul", std::move(out), {a, b}, [](const BackwardArgs& args) {
    const Tensor& av = *args.inputs[0];
    const Tensor& bv = *args.inputs[1];
    const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
    const Tensor& go = args.grad_out;
    std::vector<Tensor> res(2);
    if (args.needs_grad[0]) {
      Tensor ga(av.shape(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < k; ++r) {
          const double* br = bv.data() + r * m;
          const double* gr = go.data() + i * m;
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += gr[j] * br[j];
          ga[i * k + r] = acc;
        }
      }
      res[0] = std::move(ga);
    }
    if (args.needs_grad[1]) {
      // Rows of b accumulate over the batch in ascending order starting from 0.
      Tensor gb(bv.shape(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = go.data() + i * m;
        for (std::size_t r = 0; r < k; ++r) {
          const double av_ir = av[i * k + r];
          double* dst = gb.data() + r * m;
          for (std::size_t j = 0; j < m; ++j) dst[j] += av_ir * gr[j];
        }
      }
      res[1] = std::move(gb);
    }
    return res;
  });
}

Var relu(Tape& tape, Var x) {
  Tensor out = relu(tape.value(x));
  return tape.record("relu", std::move(out), {x}, [](const BackwardArgs& a) {
    Tensor gx = a.grad_out;
    const Tensor& in = *a.inputs[0];
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      if (!(in[i] > 0.0)) gx[i] = 0.0;
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var sigmoid(Tape& tape, Var x) {
  Tensor out = sigmoid(tape.value(x));
  return tape.record("sigmoid", std::move(out), {x}, [](const BackwardArgs& a) {
    Tensor gx = a.grad_out;
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const double s = a.output[i];
      gx[i] *= s * (1.0 - s);
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var mul_broadcast(Tape& tape, Var x, Var att) {
  Tensor out = mul_broadcast(tape.value(x), tape.value(att));
  return tape.record("mul_broadcast", std::move(out), {x, att}, [](const BackwardArgs& a) {
    const Tensor& xv = *a.inputs[0];
    const Tensor& av = *a.inputs[1];
    const std::size_t inner = xv.numel() / av.numel();
    std::vector<Tensor> res(2);
    if (a.needs_grad[0]) {
      Tensor gx = a.grad_out;
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= av[i / inner];
      res[0] = std::move(gx);
    }
    if (a.needs_grad[1]) {
      Tensor ga(av.shape(), 0.0);
      for (std::size_t o = 0; o < av.numel(); ++o) {
        double acc = 0.0;
        for (std::size_t j = 0; j < inner; ++j) {
          acc += a.grad_out[o * inner + j] * xv[o * inner + j];
        }
        ga[o] = acc;
      }
      res[1] = std::move(ga);
    }
    return res;
  });
}

Var softmax_temperature(Tape& tape, Var z, double temperature) {
  Tensor out = softmax_temperature(tape.value(z), temperature);
  return tape.record("softmax_temperature", std::move(out), {z},
                     [temperature](const BackwardArgs& a) {
                       const Tensor& y = a.output;
                       const std::size_t k = y.shape().back();
                       const std::size_t rows = y.numel() / k;
                       Tensor gz(y.shape(), 0.0);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < k; ++j) {
                           dot += a.grad_out[r * k + j] * y[r * k + j];
                         }
                         for (std::size_t j = 0; j < k; ++j) {
                           gz[r * k + j] =
                               y[r * k + j] * (a.grad_out[r * k + j] - dot) / temperature;
                         }
                       }
                       return std::vector<Tensor>{std::move(gz)};
                     });
}

Var avg_pool2d(Tape& tape, Var x, std::size_t window) {
  Tensor out = avg_pool2d(tape.value(x), window);
  return tape.record("avg_pool2d", std::move(out), {x}, [window](const BackwardArgs& a) {
    const Tensor& in = *a.inputs[0];
    const std::size_t planes = in.dim(0) * in.dim(1), h = in.dim(2), w = in.dim(3);
    const std::size_t ho = h / window, wo = w / window;
    const double inv = 1.0 / static_cast<double>(window * window);
    Tensor gx(in.shape(), 0.0);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          gx[(pl * h + y) * w + x] = a.grad_out[(pl * ho + y / window) * wo + x / window] * inv;
        }
      }
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, double eps, ChannelStats* stats) {
  const Tensor& xv = tape.value(x);
  check_bn(xv, tape.value(gamma), tape.value(beta), eps, "batch_norm");
  ChannelStats st = channel_stats(xv);
  Tensor out = batch_norm_inference(xv, st.mean, st.var, tape.value(gamma), tape.value(beta), eps);
  if (stats != nullptr) *stats = st;
  return tape.record("batch_norm", std::move(out), {x, gamma, beta},
                     [st = std::move(st), eps](const BackwardArgs& a) {
    const Tensor& in = *a.inputs[0];
    const Tensor& g = *a.inputs[1];
    const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
    const double m = static_cast<double>(n * plane);
    Tensor gx(in.shape(), 0.0), gg(Shape{c}, 0.0), gb(Shape{c}, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(st.var[ch] + eps);
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double xhat = (in[off + j] - st.mean[ch]) * inv;
          sum_g += a.grad_out[off + j];
          sum_gx += a.grad_out[off + j] * xhat;
        }
      }
      gb[ch] = sum_g;
      gg[ch] = sum_gx;
      const double scale = g[ch] * inv / m;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double xhat = (in[off + j] - st.mean[ch]) * inv;
          gx[off + j] = scale * (m * a.grad_out[off + j] - sum_g - xhat * sum_gx);
        }
      }
    }
    return std::vector<Tensor>{std::move(gx), std::move(gg), std::move(gb)};
  });
}

Var batch_norm_inference(Tape& tape, Var x, const Tensor& mean, const Tensor& var, Var gamma, Var beta,
                         double eps) {
  Tensor out = batch_norm_inference(tape.value(x), mean, var, tape.value(gamma), tape.value(beta), eps);
  return tape.record("batch_norm_inference", std::move(out), {x, gamma, beta},
                     [mean, var, eps](const BackwardArgs& a) {
    const Tensor& in = *a.inputs[0];
    const Tensor& g = *a.inputs[1];
    const std::size_t n = in.dim(0), c = in.dim(1), plane = in.dim(2) * in.dim(3);
    Tensor gx(in.shape(), 0.0), gg(Shape{c}, 0.0), gb(Shape{c}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(var[ch] + eps);
        const std::size_t off = (i * c + ch) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          const double go = a.grad_out[off + j];
          gx[off + j] = go * g[ch] * inv;
          gg[ch] += go * ((in[off + j] - mean[ch]) * inv);
          gb[ch] += go;
        }
      }
    }
    return std::vector<Tensor>{std::move(gx), std::move(gg), std::move(gb)};
  });
}

Var sum(Tape& tape, Var x) {
  double acc = 0.0;
  for (double v : tape.value(x).values()) acc += v;
  return tape.record("sum", Tensor::scalar(acc), {x}, [](const BackwardArgs& a) {
    return std::vector<Tensor>{Tensor(a.inputs[0]->shape(), a.grad_out[0])};
  });
}

Var weighted_sum(Tape& tape, Var x, const Tensor& weights) {
  const Tensor& xv = tape.value(x);
  if (weights.shape() != xv.shape()) {
    shape_fail("weighted_sum: weight shape " + shape_to_string(weights.shape()) +
               " != input shape " + shape_to_string(xv.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * weights[i];
  return tape.record("weighted_sum", Tensor::scalar(acc), {x}, [weights](const BackwardArgs& a) {
    Tensor gx = weights;
    for (double& v : gx.values()) v *= a.grad_out[0];
    return std::vector<Tensor>{std::move(gx)};
  });
}

Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& z = tape.value(logits);
  require_rank(z, 2, "cross_entropy", "logits");
  const std::size_t n = z.dim(0), c = z.dim(1);
  if (labels.size() != n) {
    shape_fail("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
               std::to_string(n));
  }
  Tensor probs = softmax(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ValueError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(c) + ")");
    }
    const double* zr = z.data() + i * c;
    const double m = *std::max_element(zr, zr + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(zr[j] - m);
    loss += (m + std::log(total)) - zr[y];
  }
  loss /= static_cast<double>(n);
  std::vector<int> owned(labels.begin(), labels.end());
  return tape.record("cross_entropy", Tensor::scalar(loss), {logits},
                     [probs = std::move(probs), owned = std::move(owned)](const BackwardArgs& a) {
                       Tensor gz = probs;
                       const std::size_t rows = owned.size();
                       const std::size_t cols = gz.numel() / rows;
                       const double scale = a.grad_out[0] / static_cast<double>(rows);
                       for (std::size_t i = 0; i < rows; ++i) {
                         gz[i * cols + static_cast<std::size_t>(owned[i])] -= 1.0;
                       }
                       for (double& v : gz.values()) v *= scale;
                       return std::vector<Tensor>{std::move(gz)};
                     });
}

Var dropout(Tape& tape, Var x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ValueError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  const Tensor& xv = tape.value(x);
  Tensor mask(xv.shape(), 0.0);
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = rng.uniform() >= rate ? keep : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return tape.record("dropout", std::move(out), {x}, [mask = std::move(mask)](const BackwardArgs& a) {
    Tensor gx = a.grad_out;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= mask[i];
    return std::vector<Tensor>{std::move(gx)};
  });
}

}  // namespace fmdconv
