#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advarena/denoiser.hpp"
#include "advarena/model.hpp"
#include "advarena/tensor.hpp"

namespace advarena {

enum class DefenseKind { direct, median_ensemble, bit_depth, random_resize_pad, denoised };

std::string to_string(DefenseKind k);
DefenseKind defense_kind_from_string(const std::string& s);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::direct;
  std::vector<std::string> members;  // model names; median_ensemble uses all, others use the first
  unsigned bits = 8;
  std::size_t resize_min = 33;  // half-open range [resize_min, resize_max)
  std::size_t resize_max = 40;
  std::size_t pad_to = 40;
  std::size_t n_patterns = 30;
  double flip_prob = 0.5;
  std::string denoiser;
  std::uint64_t seed = 0;

  /// input_size is the model's (square) input extent.
  void validate(std::size_t input_size) const;
};

std::size_t defend_direct(const Classifier& model, const Tensor& x);

/// 2x2 median filter, then argmax of the mean member softmax.
std::size_t defend_median_ensemble(std::span<const Classifier* const> models, const Tensor& x);

/// Round every pixel to the nearest of 2^bits uniform levels on [0,1].
Tensor reduce_bit_depth(const Tensor& x, unsigned bits);
std::size_t defend_bit_depth(const Classifier& model, const Tensor& x, unsigned bits);

/// One randomisation pattern: resize to (h, w), place at (top, left) inside a pad_to square, optional flip.
struct ResizePadPattern {
  std::size_t h = 0, w = 0, top = 0, left = 0;
  bool flip = false;
};

/// Draws cfg.n_patterns patterns from cfg.seed.
std::vector<ResizePadPattern> sample_patterns(const DefenseConfig& cfg);

/// Applies a pattern. The padded image is resized back to the model's input extent when pad_to differs from
/// it, so classifiers with a fixed input size can consume it.
Tensor apply_pattern(const Tensor& x, const ResizePadPattern& p, std::size_t pad_to);

/// Mean softmax over the given patterns.
Tensor pattern_probabilities(const Classifier& model, const Tensor& x, std::span<const ResizePadPattern> patterns,
                             std::size_t pad_to);

std::size_t defend_random_resize_pad(const Classifier& model, const Tensor& x, const DefenseConfig& cfg);

std::size_t defend_denoised(const Classifier& model, const Denoiser& denoiser, const Tensor& x);

/// A defense with its models resolved. `seed` in the config is mixed with a caller-supplied per-image salt
/// for the randomised kind.
struct Defense {
  DefenseConfig config;
  std::vector<const Classifier*> models;
  const Denoiser* denoiser = nullptr;

  void validate() const;
  std::size_t classify(const Tensor& x, std::uint64_t salt = 0) const;
};

}  // namespace advarena
