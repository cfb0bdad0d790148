#pragma once

#include <array>
#include <cstddef>

#include "advarena/tensor.hpp"

// Forward and backward kernels. Every function is pure; backward passes are the exact adjoints of the
// corresponding forward maps.
namespace advarena::ops {

// ---- convolution -----------------------------------------------------------------------------------

struct ConvGeometry {
  std::size_t out_h;
  std::size_t out_w;
};

/// Output extents of a k x k convolution, or throws if they are not a positive integer.
ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t k, std::size_t stride, std::size_t pad);

/// Cross-correlation of input [C,H,W] with kernels [O,C,k,k].
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad);

struct ConvGrads {
  Tensor input;
  Tensor kernels;
};
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad,
                          const Tensor& upstream);
/// Only the input adjoint; skips the kernel-gradient accumulation.
Tensor conv2d_backward_input(const Shape& input_shape, const Tensor& kernels, std::size_t stride, std::size_t pad,
                             const Tensor& upstream);

/// Adds bias[o] to every element of channel o.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);
Tensor channel_bias_backward(const Tensor& upstream);

// ---- dense -----------------------------------------------------------------------------------------

/// y = W x + b with x flattened; weights [m,n], bias [m].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);
Tensor dense_backward_input(const Shape& input_shape, const Tensor& weights, const Tensor& upstream);

// ---- elementwise -----------------------------------------------------------------------------------

enum class Unary { relu, sign, clip01, round };

Tensor elementwise(const Tensor& input, Unary kind);
Tensor clip_range(const Tensor& input, double lo, double hi);

Tensor relu(const Tensor& input);
/// Passes upstream where input > 0; zero elsewhere, including exactly 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);
/// sign(0) = 0.
Tensor sign(const Tensor& input);
Tensor clip01(const Tensor& input);
/// Round half away from zero.
Tensor round(const Tensor& input);

// ---- loss ------------------------------------------------------------------------------------------

Tensor softmax(const Tensor& logits);
/// Numerically stable log(sum(exp(logits))).
double log_sum_exp(const Tensor& logits);

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};
LossGrad softmax_cross_entropy(const Tensor& logits, std::size_t label);

// ---- resampling ------------------------------------------------------------------------------------

/// Align-corners bilinear resampling of [C,H,W] to [C,out_h,out_w].
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor bilinear_resize_backward(const Tensor& upstream, std::size_t in_h, std::size_t in_w);

/// Eight-parameter projective transform mapping OUTPUT pixel (x, y) to SOURCE location
///   ((t0 x + t1 y + t2) / k, (t3 x + t4 y + t5) / k),  k = t6 x + t7 y + 1.
struct WarpParams {
  std::array<double, 8> theta{1, 0, 0, 0, 1, 0, 0, 0};

  static WarpParams identity() { return {}; }
  /// Moves image content by (dx, dy) pixels.
  static WarpParams translation(double dx, double dy) { return {{1, 0, -dx, 0, 1, -dy, 0, 0}}; }

  double determinant() const;
  bool valid() const;
};

Tensor projective_warp(const Tensor& input, const WarpParams& params);
Tensor projective_warp_backward(const Tensor& upstream, const WarpParams& params);

/// Nearest-neighbour upsampling by an integer factor in both spatial dimensions.
Tensor upsample_nearest(const Tensor& input, std::size_t factor);
Tensor upsample_nearest_backward(const Tensor& upstream, std::size_t factor);

// ---- image filters ---------------------------------------------------------------------------------

/// 2x2 median anchored at (i, j) with replicate padding on the bottom/right edges.
Tensor median_filter_2x2(const Tensor& input);

Tensor pad_zero(const Tensor& input, std::size_t left, std::size_t right, std::size_t top, std::size_t bottom);
/// Adjoint of pad_zero: crops the interior.
Tensor pad_zero_backward(const Tensor& upstream, std::size_t left, std::size_t right, std::size_t top,
                         std::size_t bottom);

Tensor hflip(const Tensor& input);

/// Concatenates two [C,H,W] tensors along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits off the first `channels` channels (and the rest).
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t channels);

}  // namespace advarena::ops
