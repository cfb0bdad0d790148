#pragma once
// Internal helpers shared by the hand-wired networks (denoiser, attack FCN).

#include <cmath>
#include <cstdint>
#include <vector>

#include "advarena/ops.hpp"
#include "advarena/rng.hpp"
#include "advarena/tensor.hpp"

namespace advarena::detail {

inline Tensor conv_forward(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t stride, std::size_t pad) {
  return ops::add_channel_bias(ops::conv2d(x, k, stride, pad), b);
}

// Accumulates kernel/bias gradients into gk/gb and returns the input gradient.
inline Tensor conv_backward(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad,
                            const Tensor& upstream, Tensor& gk, Tensor& gb) {
  gb += ops::channel_bias_backward(upstream);
  auto g = ops::conv2d_backward(x, k, stride, pad, upstream);
  gk += g.kernels;
  return std::move(g.input);
}

inline Tensor he_uniform(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  const std::size_t fan_in = shape_size(shape) / shape[0];
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

inline std::vector<Tensor> zeros_like(const std::vector<Tensor>& ts) {
  std::vector<Tensor> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.emplace_back(t.shape());
  return out;
}

// Plain SGD with momentum: v = mu v - lr g; w += v.
class MomentumSgd {
 public:
  // max_norm > 0 rescales the (scaled) gradient to at most that global L2 norm.
  MomentumSgd(const std::vector<Tensor>& weights, double lr, double momentum, double max_norm = 0.0)
      : velocity_(zeros_like(weights)), lr_(lr), momentum_(momentum), max_norm_(max_norm) {}

  void step(std::vector<Tensor>& weights, const std::vector<Tensor>& grads, double grad_scale) {
    if (max_norm_ > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads) sq += dot(g, g);
      const double norm = std::sqrt(sq) * grad_scale;
      if (norm > max_norm_) grad_scale *= max_norm_ / norm;
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      velocity_[k] *= momentum_;
      axpy(-lr_ * grad_scale, grads[k], velocity_[k]);
      weights[k] += velocity_[k];
    }
  }

 private:
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
  double max_norm_;
};

}  // namespace advarena::detail
