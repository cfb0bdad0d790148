#include "advarena/defenses.hpp"

#include <algorithm>
#include <cmath>

#include "advarena/ops.hpp"
#include "advarena/rng.hpp"

namespace advarena {

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::direct:
      return "direct";
    case DefenseKind::median_ensemble:
      return "median_ensemble";
    case DefenseKind::bit_depth:
      return "bit_depth";
    case DefenseKind::random_resize_pad:
      return "random_resize_pad";
    case DefenseKind::denoised:
      return "denoised";
  }
  return "?";
}

DefenseKind defense_kind_from_string(const std::string& s) {
  for (auto k : {DefenseKind::direct, DefenseKind::median_ensemble, DefenseKind::bit_depth,
                 DefenseKind::random_resize_pad, DefenseKind::denoised})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown defense kind '" + s + "'");
}

void DefenseConfig::validate(std::size_t input_size) const {
  if (kind == DefenseKind::bit_depth && (bits < 1 || bits > 8))
    throw std::invalid_argument("defense: bits must be in [1,8], got " + std::to_string(bits));
  if (kind == DefenseKind::random_resize_pad) {
    if (!(input_size <= resize_min && resize_min < resize_max && resize_max <= pad_to + 1))
      throw std::invalid_argument("defense: need input_size <= resize_min < resize_max <= pad_to + 1 (got " +
                                  std::to_string(input_size) + ", " + std::to_string(resize_min) + ", " +
                                  std::to_string(resize_max) + ", " + std::to_string(pad_to) + ")");
    if (n_patterns == 0) throw std::invalid_argument("defense: n_patterns must be >= 1");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw std::invalid_argument("defense: flip_prob must be in [0,1]");
  }
}

std::size_t defend_direct(const Classifier& model, const Tensor& x) { return model.predict(x); }

std::size_t defend_median_ensemble(std::span<const Classifier* const> models, const Tensor& x) {
  if (models.empty()) throw std::invalid_argument("median ensemble: no models");
  const Tensor filtered = ops::median_filter_2x2(x);
  Tensor mean({models.front()->classes()});
  for (const auto* m : models) mean += m->probabilities(filtered);
  mean *= 1.0 / static_cast<double>(models.size());
  return argmax(mean.data());
}

Tensor reduce_bit_depth(const Tensor& x, unsigned bits) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("bit depth: bits must be in [1,8]");
  const double levels = static_cast<double>((1u << bits) - 1u);
  Tensor out = x;
  for (double& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * levels) / levels;
  return out;
}

std::size_t defend_bit_depth(const Classifier& model, const Tensor& x, unsigned bits) {
  return model.predict(reduce_bit_depth(x, bits));
}

std::vector<ResizePadPattern> sample_patterns(const DefenseConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, hash_name("resize_pad")));
  std::vector<ResizePadPattern> out;
  const std::size_t span = cfg.resize_max - cfg.resize_min;
  for (std::size_t i = 0; i < cfg.n_patterns; ++i) {
    ResizePadPattern p;
    p.w = cfg.resize_min + rng.uniform_int(span);
    p.h = cfg.resize_min + rng.uniform_int(span);
    p.left = rng.uniform_int(cfg.pad_to - p.w + 1);
    p.top = rng.uniform_int(cfg.pad_to - p.h + 1);
    p.flip = rng.uniform() < cfg.flip_prob;
    out.push_back(p);
  }
  return out;
}

Tensor apply_pattern(const Tensor& x, const ResizePadPattern& p, std::size_t pad_to) {
  const std::size_t H = x.dim(1), W = x.dim(2);
  if (p.h > pad_to || p.w > pad_to || p.top + p.h > pad_to || p.left + p.w > pad_to)
    throw std::invalid_argument("resize/pad pattern does not fit inside pad_to");
  Tensor t = (p.h == H && p.w == W) ? x : ops::bilinear_resize(x, p.h, p.w);
  if (pad_to != p.h || pad_to != p.w) t = ops::pad_zero(t, p.left, pad_to - p.w - p.left, p.top, pad_to - p.h - p.top);
  if (p.flip) t = ops::hflip(t);
  if (pad_to != H || pad_to != W) t = ops::bilinear_resize(t, H, W);
  return t;
}

Tensor pattern_probabilities(const Classifier& model, const Tensor& x, std::span<const ResizePadPattern> patterns,
                             std::size_t pad_to) {
  if (patterns.empty()) throw std::invalid_argument("resize/pad: no patterns");
  Tensor mean({model.classes()});
  for (const auto& p : patterns) mean += model.probabilities(apply_pattern(x, p, pad_to));
  mean *= 1.0 / static_cast<double>(patterns.size());
  return mean;
}

std::size_t defend_random_resize_pad(const Classifier& model, const Tensor& x, const DefenseConfig& cfg) {
  cfg.validate(x.dim(1));
  const auto patterns = sample_patterns(cfg);
  return argmax(pattern_probabilities(model, x, patterns, cfg.pad_to).data());
}

std::size_t defend_denoised(const Classifier& model, const Denoiser& denoiser, const Tensor& x) {
  return model.predict(denoise(denoiser, x));
}

void Defense::validate() const {
  if (models.empty()) throw std::invalid_argument("defense: no models");
  for (const auto* m : models)
    if (m == nullptr) throw std::invalid_argument("defense: null model");
  if (config.kind == DefenseKind::denoised && denoiser == nullptr)
    throw std::invalid_argument("defense: denoised kind needs a denoiser");
  config.validate(models.front()->spec().height);
}

std::size_t Defense::classify(const Tensor& x, std::uint64_t salt) const {
  switch (config.kind) {
    case DefenseKind::direct:
      return defend_direct(*models.front(), x);
    case DefenseKind::median_ensemble:
      return defend_median_ensemble(models, x);
    case DefenseKind::bit_depth:
      return defend_bit_depth(*models.front(), x, config.bits);
    case DefenseKind::random_resize_pad: {
      DefenseConfig c = config;
      c.seed = derive_seed(config.seed, salt);
      return defend_random_resize_pad(*models.front(), x, c);
    }
    case DefenseKind::denoised:
      return defend_denoised(*models.front(), *denoiser, x);
  }
  throw std::logic_error("defense: unhandled kind");
}

}  // namespace advarena
