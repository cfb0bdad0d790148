#include "advarena/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace advarena::ops {

namespace {

using Index = std::ptrdiff_t;

struct Span1 {
  Index lo;  // inclusive
  Index hi;  // exclusive
};

// Output positions o in [0, out) with o*stride + offset inside [0, in).
Span1 valid_outputs(Index offset, Index stride, Index in, Index out) {
  Index lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  Index last = in - 1 - offset;
  Index hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_str(t.shape()));
}

void check_conv_args(const Tensor& input, const Tensor& kernels) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (kernels.dim(1) != input.dim(0))
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(kernels.dim(1)) +
                                " do not match input channels " + std::to_string(input.dim(0)));
  if (kernels.dim(2) != kernels.dim(3))
    throw std::invalid_argument("conv2d: kernels must be square, got " + shape_str(kernels.shape()));
}

}  // namespace

ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (k == 0 || k > h + 2 * pad || k > w + 2 * pad)
    throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                                std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
  if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0)
    throw std::invalid_argument("conv2d: output extent is not an integer for input " + std::to_string(h) + "x" +
                                std::to_string(w) + ", kernel " + std::to_string(k) + ", stride " +
                                std::to_string(stride) + ", pad " + std::to_string(pad));
  return {(h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad) {
  check_conv_args(input, kernels);
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index O = kernels.dim(0), K = kernels.dim(2);
  const auto g = conv_geometry(H, W, K, stride, pad);
  const Index OH = g.out_h, OW = g.out_w, S = stride, P = pad;

  Tensor out({static_cast<std::size_t>(O), g.out_h, g.out_w});
  const double* in = input.data().data();
  const double* ker = kernels.data().data();
  double* dst = out.data().data();

  for (Index o = 0; o < O; ++o) {
    double* out_ch = dst + o * OH * OW;
    for (Index c = 0; c < C; ++c) {
      const double* in_ch = in + c * H * W;
      for (Index ky = 0; ky < K; ++ky) {
        const auto rows = valid_outputs(ky - P, S, H, OH);
        for (Index kx = 0; kx < K; ++kx) {
          const double w = ker[((o * C + c) * K + ky) * K + kx];
          const auto cols = valid_outputs(kx - P, S, W, OW);
          for (Index oy = rows.lo; oy < rows.hi; ++oy) {
            const double* in_row = in_ch + (oy * S + ky - P) * W + (kx - P);
            double* out_row = out_ch + oy * OW;
            if (S == 1) {
              for (Index ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] += w * in_row[ox];
            } else {
              for (Index ox = cols.lo; ox < cols.hi; ++ox) out_row[ox] += w * in_row[ox * S];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad,
                          const Tensor& upstream) {
  check_conv_args(input, kernels);
  const Index C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const Index O = kernels.dim(0), K = kernels.dim(2);
  const auto g = conv_geometry(H, W, K, stride, pad);
  const Index OH = g.out_h, OW = g.out_w, S = stride, P = pad;
  if (upstream.shape() != Shape{static_cast<std::size_t>(O), g.out_h, g.out_w})
    throw std::invalid_argument("conv2d_backward: upstream shape " + shape_str(upstream.shape()) +
                                " does not match output shape");

  ConvGrads grads{Tensor(input.shape()), Tensor(kernels.shape())};
  const double* in = input.data().data();
  const double* ker = kernels.data().data();
  const double* up = upstream.data().data();
  double* gin = grads.input.data().data();
  double* gker = grads.kernels.data().data();

  for (Index o = 0; o < O; ++o) {
    const double* up_ch = up + o * OH * OW;
    for (Index c = 0; c < C; ++c) {
      const double* in_ch = in + c * H * W;
      double* gin_ch = gin + c * H * W;
      for (Index ky = 0; ky < K; ++ky) {
        const auto rows = valid_outputs(ky - P, S, H, OH);
        for (Index kx = 0; kx < K; ++kx) {
          const Index widx = ((o * C + c) * K + ky) * K + kx;
          const double w = ker[widx];
          const auto cols = valid_outputs(kx - P, S, W, OW);
          double acc = 0.0;
          for (Index oy = rows.lo; oy < rows.hi; ++oy) {
            const Index base = (oy * S + ky - P) * W + (kx - P);
            const double* in_row = in_ch + base;
            double* gin_row = gin_ch + base;
            const double* up_row = up_ch + oy * OW;
            for (Index ox = cols.lo; ox < cols.hi; ++ox) {
              const double u = up_row[ox];
              acc += u * in_row[ox * S];
              gin_row[ox * S] += w * u;
            }
          }
          gker[widx] += acc;
        }
      }
    }
  }
  return grads;
}

Tensor conv2d_backward_input(const Shape& input_shape, const Tensor& kernels, std::size_t stride, std::size_t pad,
                             const Tensor& upstream) {
  if (input_shape.size() != 3) throw std::invalid_argument("conv2d_backward_input: input must be rank 3");
  require_rank(kernels, 4, "conv2d kernels");
  const Index C = input_shape[0], H = input_shape[1], W = input_shape[2];
  const Index O = kernels.dim(0), K = kernels.dim(2);
  if (static_cast<Index>(kernels.dim(1)) != C) throw std::invalid_argument("conv2d_backward_input: channel mismatch");
  const auto g = conv_geometry(H, W, K, stride, pad);
  const Index OH = g.out_h, OW = g.out_w, S = stride, P = pad;
  if (upstream.shape() != Shape{static_cast<std::size_t>(O), g.out_h, g.out_w})
    throw std::invalid_argument("conv2d_backward_input: upstream shape " + shape_str(upstream.shape()) +
                                " does not match output shape");

  Tensor gin_t(input_shape);
  const double* ker = kernels.data().data();
  const double* up = upstream.data().data();
  double* gin = gin_t.data().data();
  for (Index o = 0; o < O; ++o) {
    const double* up_ch = up + o * OH * OW;
    for (Index c = 0; c < C; ++c) {
      double* gin_ch = gin + c * H * W;
      for (Index ky = 0; ky < K; ++ky) {
        const auto rows = valid_outputs(ky - P, S, H, OH);
        for (Index kx = 0; kx < K; ++kx) {
          const double w = ker[((o * C + c) * K + ky) * K + kx];
          const auto cols = valid_outputs(kx - P, S, W, OW);
          for (Index oy = rows.lo; oy < rows.hi; ++oy) {
            double* gin_row = gin_ch + (oy * S + ky - P) * W + (kx - P);
            const double* up_row = up_ch + oy * OW;
            if (S == 1) {
              for (Index ox = cols.lo; ox < cols.hi; ++ox) gin_row[ox] += w * up_row[ox];
            } else {
              for (Index ox = cols.lo; ox < cols.hi; ++ox) gin_row[ox * S] += w * up_row[ox];
            }
          }
        }
      }
    }
  }
  return gin_t;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  require_rank(input, 3, "add_channel_bias");
  if (bias.size() != input.dim(0)) throw std::invalid_argument("add_channel_bias: bias length mismatch");
  Tensor out = input;
  const std::size_t plane = input.dim(1) * input.dim(2);
  auto d = out.data();
  for (std::size_t c = 0; c < input.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) d[c * plane + i] += bias[c];
  return out;
}

Tensor channel_bias_backward(const Tensor& upstream) {
  require_rank(upstream, 3, "channel_bias_backward");
  Tensor g({upstream.dim(0)});
  const std::size_t plane = upstream.dim(1) * upstream.dim(2);
  for (std::size_t c = 0; c < upstream.dim(0); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += upstream[c * plane + i];
    g[c] = s;
  }
  return g;
}

// ---- dense -----------------------------------------------------------------------------------------

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (input.size() != n)
    throw std::invalid_argument("dense: input length " + std::to_string(input.size()) + " does not match weights " +
                                shape_str(weights.shape()));
  if (bias.rank() != 1 || bias.size() != m)
    throw std::invalid_argument("dense: bias shape " + shape_str(bias.shape()) + " does not match weights " +
                                shape_str(weights.shape()));
  Tensor out({m});
  const double* x = input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = weights.data().data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    out[i] = s + bias[i];
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (input.size() != n || upstream.size() != m) throw std::invalid_argument("dense_backward: shape mismatch");
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
  const double* x = input.data().data();
  double* gx = g.input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double u = upstream[i];
    const double* row = weights.data().data() + i * n;
    double* grow = g.weights.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      gx[j] += row[j] * u;
      grow[j] = u * x[j];
    }
    g.bias[i] = u;
  }
  return g;
}

Tensor dense_backward_input(const Shape& input_shape, const Tensor& weights, const Tensor& upstream) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (shape_size(input_shape) != n || upstream.size() != m)
    throw std::invalid_argument("dense_backward_input: shape mismatch");
  Tensor gx_t(input_shape);
  double* gx = gx_t.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double u = upstream[i];
    const double* row = weights.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * u;
  }
  return gx_t;
}

// ---- elementwise -----------------------------------------------------------------------------------

namespace {
template <typename F>
Tensor map(const Tensor& input, const char* what, F f) {
  require_finite(input, what);
  Tensor out = input;
  for (double& v : out.data()) v = f(v);
  return out;
}
}  // namespace

Tensor relu(const Tensor& input) {
  return map(input, "relu", [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  require_same_shape(input, upstream, "relu_backward");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > 0.0)) g[i] = 0.0;
  return g;
}

Tensor sign(const Tensor& input) {
  return map(input, "sign", [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clip01(const Tensor& input) {
  return map(input, "clip01", [](double v) { return std::clamp(v, 0.0, 1.0); });
}

Tensor clip_range(const Tensor& input, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clip_range: lo must not exceed hi");
  return map(input, "clip_range", [lo, hi](double v) { return std::clamp(v, lo, hi); });
}

Tensor round(const Tensor& input) {
  return map(input, "round", [](double v) { return std::round(v); });
}

Tensor elementwise(const Tensor& input, Unary kind) {
  switch (kind) {
    case Unary::relu:
      return relu(input);
    case Unary::sign:
      return sign(input);
    case Unary::clip01:
      return clip01(input);
    case Unary::round:
      return round(input);
  }
  throw std::invalid_argument("elementwise: unknown kind");
}

// ---- loss ------------------------------------------------------------------------------------------

double log_sum_exp(const Tensor& logits) {
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  double s = 0.0;
  for (double v : logits.data()) s += std::exp(v - m);
  return m + std::log(s);
}

Tensor softmax(const Tensor& logits) {
  require_finite(logits, "softmax");
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p = logits;
  double s = 0.0;
  for (double& v : p.data()) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : p.data()) v /= s;
  return p;
}

LossGrad softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.empty()) throw std::invalid_argument("softmax_cross_entropy: empty logits");
  if (label >= logits.size())
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                                std::to_string(logits.size()) + ")");
  require_finite(logits, "softmax_cross_entropy");
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  double s = 0.0;
  for (double v : logits.data()) s += std::exp(v - m);
  const double log_s = std::log(s);
  LossGrad r;
  r.loss = std::max(0.0, log_s - (logits[label] - m));
  r.grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logits[i] - m - log_s);
  r.grad[label] -= 1.0;
  return r;
}

// ---- resampling ------------------------------------------------------------------------------------

namespace {

struct Tap {
  std::size_t i0;
  std::size_t i1;
  double f;  // weight of i1; i0 gets 1 - f
};

std::vector<Tap> align_corner_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                               : 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("bilinear_resize: output extents must be >= 1");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const auto ty = align_corner_taps(H, out_h);
  const auto tx = align_corner_taps(W, out_w);
  Tensor out({C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        out.at(c, y, x) = (1.0 - a.f) * ((1.0 - b.f) * input.at(c, a.i0, b.i0) + b.f * input.at(c, a.i0, b.i1)) +
                          a.f * ((1.0 - b.f) * input.at(c, a.i1, b.i0) + b.f * input.at(c, a.i1, b.i1));
      }
    }
  return out;
}

Tensor bilinear_resize_backward(const Tensor& upstream, std::size_t in_h, std::size_t in_w) {
  require_rank(upstream, 3, "bilinear_resize_backward");
  if (in_h == 0 || in_w == 0) throw std::invalid_argument("bilinear_resize_backward: input extents must be >= 1");
  const std::size_t C = upstream.dim(0), OH = upstream.dim(1), OW = upstream.dim(2);
  const auto ty = align_corner_taps(in_h, OH);
  const auto tx = align_corner_taps(in_w, OW);
  Tensor g({C, in_h, in_w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < OH; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < OW; ++x) {
        const auto& b = tx[x];
        const double u = upstream.at(c, y, x);
        g.at(c, a.i0, b.i0) += (1.0 - a.f) * (1.0 - b.f) * u;
        g.at(c, a.i0, b.i1) += (1.0 - a.f) * b.f * u;
        g.at(c, a.i1, b.i0) += a.f * (1.0 - b.f) * u;
        g.at(c, a.i1, b.i1) += a.f * b.f * u;
      }
    }
  return g;
}

double WarpParams::determinant() const {
  const auto& t = theta;
  // | t0 t1 t2 |
  // | t3 t4 t5 |
  // | t6 t7 1  |
  return t[0] * (t[4] - t[5] * t[7]) - t[1] * (t[3] - t[5] * t[6]) + t[2] * (t[3] * t[7] - t[4] * t[6]);
}

bool WarpParams::valid() const {
  for (double v : theta)
    if (!std::isfinite(v)) return false;
  return std::abs(determinant()) > 1e-9;
}

namespace {

// Visits the (up to four) in-bounds bilinear taps of each output pixel.
template <typename F>
void for_each_warp_tap(std::size_t H, std::size_t W, const WarpParams& p, F f) {
  const auto& t = p.theta;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double xd = static_cast<double>(x), yd = static_cast<double>(y);
      const double k = t[6] * xd + t[7] * yd + 1.0;
      if (std::abs(k) < 1e-12) continue;
      const double sx = (t[0] * xd + t[1] * yd + t[2]) / k;
      const double sy = (t[3] * xd + t[4] * yd + t[5]) / k;
      if (!std::isfinite(sx) || !std::isfinite(sy)) continue;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      if (fx0 < -1.0 || fy0 < -1.0 || fx0 > static_cast<double>(W) || fy0 > static_cast<double>(H)) continue;
      const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
      const double ax = sx - fx0, ay = sy - fy0;
      const std::ptrdiff_t xs[2] = {x0, x0 + 1};
      const std::ptrdiff_t ys[2] = {y0, y0 + 1};
      const double wx[2] = {1.0 - ax, ax};
      const double wy[2] = {1.0 - ay, ay};
      for (int j = 0; j < 2; ++j) {
        if (ys[j] < 0 || ys[j] >= static_cast<std::ptrdiff_t>(H)) continue;
        for (int i = 0; i < 2; ++i) {
          if (xs[i] < 0 || xs[i] >= static_cast<std::ptrdiff_t>(W)) continue;
          f(y * W + x, static_cast<std::size_t>(ys[j]) * W + static_cast<std::size_t>(xs[i]), wy[j] * wx[i]);
        }
      }
    }
}

void check_warp(const Tensor& t, const WarpParams& p, const char* what) {
  require_rank(t, 3, what);
  if (!p.valid())
    throw std::invalid_argument(std::string(what) + ": degenerate homography (|det| = " +
                                std::to_string(std::abs(p.determinant())) + ")");
}

}  // namespace

Tensor projective_warp(const Tensor& input, const WarpParams& params) {
  check_warp(input, params, "projective_warp");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2), plane = H * W;
  Tensor out(input.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = input.data().data() + c * plane;
    double* dst = out.data().data() + c * plane;
    for_each_warp_tap(H, W, params, [&](std::size_t o, std::size_t s, double w) { dst[o] += w * src[s]; });
  }
  return out;
}

Tensor projective_warp_backward(const Tensor& upstream, const WarpParams& params) {
  check_warp(upstream, params, "projective_warp_backward");
  const std::size_t C = upstream.dim(0), H = upstream.dim(1), W = upstream.dim(2), plane = H * W;
  Tensor g(upstream.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const double* up = upstream.data().data() + c * plane;
    double* dst = g.data().data() + c * plane;
    for_each_warp_tap(H, W, params, [&](std::size_t o, std::size_t s, double w) { dst[s] += w * up[o]; });
  }
  return g;
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
  require_rank(input, 3, "upsample_nearest");
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Tensor out({C, H * factor, W * factor});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H * factor; ++y)
      for (std::size_t x = 0; x < W * factor; ++x) out.at(c, y, x) = input.at(c, y / factor, x / factor);
  return out;
}

Tensor upsample_nearest_backward(const Tensor& upstream, std::size_t factor) {
  require_rank(upstream, 3, "upsample_nearest_backward");
  if (factor == 0 || upstream.dim(1) % factor || upstream.dim(2) % factor)
    throw std::invalid_argument("upsample_nearest_backward: extents not divisible by factor");
  const std::size_t C = upstream.dim(0), H = upstream.dim(1) / factor, W = upstream.dim(2) / factor;
  Tensor g({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H * factor; ++y)
      for (std::size_t x = 0; x < W * factor; ++x) g.at(c, y / factor, x / factor) += upstream.at(c, y, x);
  return g;
}

// ---- image filters ---------------------------------------------------------------------------------

Tensor median_filter_2x2(const Tensor& input) {
  require_rank(input, 3, "median_filter_2x2");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Tensor out(input.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y) {
      const std::size_t y1 = std::min(y + 1, H - 1);
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t x1 = std::min(x + 1, W - 1);
        std::array<double, 4> v{input.at(c, y, x), input.at(c, y, x1), input.at(c, y1, x), input.at(c, y1, x1)};
        std::sort(v.begin(), v.end());
        out.at(c, y, x) = 0.5 * (v[1] + v[2]);
      }
    }
  return out;
}

Tensor pad_zero(const Tensor& input, std::size_t left, std::size_t right, std::size_t top, std::size_t bottom) {
  require_rank(input, 3, "pad_zero");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Tensor out({C, H + top + bottom, W + left + right});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(c, y + top, x + left) = input.at(c, y, x);
  return out;
}

Tensor pad_zero_backward(const Tensor& upstream, std::size_t left, std::size_t right, std::size_t top,
                         std::size_t bottom) {
  require_rank(upstream, 3, "pad_zero_backward");
  if (upstream.dim(1) <= top + bottom || upstream.dim(2) <= left + right)
    throw std::invalid_argument("pad_zero_backward: padding exceeds extents");
  const std::size_t C = upstream.dim(0), H = upstream.dim(1) - top - bottom, W = upstream.dim(2) - left - right;
  Tensor g({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) g.at(c, y, x) = upstream.at(c, y + top, x + left);
  return g;
}

Tensor hflip(const Tensor& input) {
  require_rank(input, 3, "hflip");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Tensor out(input.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = input.at(c, y, W - 1 - x);
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  std::vector<double> d(a.data().begin(), a.data().end());
  d.insert(d.end(), b.data().begin(), b.data().end());
  return Tensor({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(d));
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t channels) {
  require_rank(t, 3, "split_channels");
  if (channels == 0 || channels >= t.dim(0)) throw std::invalid_argument("split_channels: bad split point");
  const std::size_t plane = t.dim(1) * t.dim(2);
  const auto mid = t.data().begin() + static_cast<std::ptrdiff_t>(channels * plane);
  return {Tensor({channels, t.dim(1), t.dim(2)}, std::vector<double>(t.data().begin(), mid)),
          Tensor({t.dim(0) - channels, t.dim(1), t.dim(2)}, std::vector<double>(mid, t.data().end()))};
}

}  // namespace advarena::ops
