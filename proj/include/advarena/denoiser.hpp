#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advarena/dataset.hpp"
#include "advarena/model.hpp"
#include "advarena/tensor.hpp"

namespace advarena {

struct DenoiserSpec {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t features = 8;         // full-resolution width (encoder stage 1, decoder stage 2)
  std::size_t coarse_features = 16;  // half-resolution width

  Shape input_shape() const { return {channels, height, width}; }
  void validate() const;
  bool operator==(const DenoiserSpec&) const = default;
};

/// Noise-predicting encoder/decoder:
///   e1 conv3 s1 -> e2 conv4 s2 -> e3 conv3 -> d1 conv3 -> upsample x2 -> concat(e1) -> d2 conv3 -> d3 conv3
/// with ReLU after every conv except d3. d3 starts at zero so a fresh net predicts no noise.
class Denoiser {
 public:
  struct Trace {
    Tensor input;
    std::vector<Tensor> pre;   // pre-activations of e1, e2, e3, d1, d2
    std::vector<Tensor> post;  // relu(pre)
    Tensor concat;
    Tensor noise;
  };

  Denoiser() = default;
  Denoiser(std::string name, DenoiserSpec spec, std::vector<Tensor> weights);
  static Denoiser build(std::string name, const DenoiserSpec& spec, std::uint64_t seed);

  const std::string& name() const { return name_; }
  const DenoiserSpec& spec() const { return spec_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  std::vector<Tensor>& mutable_weights() { return weights_; }

  Trace forward(const Tensor& x_adv) const;
  Tensor predict_noise(const Tensor& x_adv) const { return forward(x_adv).noise; }
  /// Parameter gradients for an upstream gradient on the predicted noise.
  std::vector<Tensor> backward(const Trace& trace, const Tensor& upstream_noise) const;

  std::uint64_t weights_hash() const;
  void save(const std::filesystem::path& path) const;
  static Denoiser load(const std::filesystem::path& path);

 private:
  void check_input(const Tensor& x) const;

  std::string name_;
  DenoiserSpec spec_;
  std::vector<Tensor> weights_;
};

/// clip01(x_adv - D(x_adv)).
Tensor denoise(const Denoiser& net, const Tensor& x_adv);

struct DenoisePair {
  Tensor clean;
  Tensor adversarial;
  std::size_t true_label = 0;
  std::string attack_tag;
  double epsilon = 0.0;
};

enum class RecipeAttack { fgsm, ifgsm };

/// One way of corrupting training images: FGSM or I-FGSM against one model or a logit-fused ensemble.
struct DenoiseRecipe {
  std::string tag;
  RecipeAttack attack = RecipeAttack::fgsm;
  std::vector<const Classifier*> models;
  std::size_t steps = 10;  // I-FGSM only
};

/// Picks per_class_count images of each class (seeded) and corrupts each with a seeded recipe and an epsilon
/// from the arena set. Output is ordered by class, then by selection order.
std::vector<DenoisePair> generate_trainset(std::span<const DenoiseRecipe> recipes, std::span<const ImageRecord> data,
                                           std::size_t n_classes, std::size_t per_class_count, std::uint64_t seed);

enum class GuidanceKind { pixel, fgd, lgd, cgd };

std::string to_string(GuidanceKind k);
GuidanceKind guidance_from_string(const std::string& s);

struct Guidance {
  GuidanceKind kind = GuidanceKind::lgd;
  const Classifier* guide = nullptr;  // unused for pixel
  std::optional<std::size_t> layer;   // FGD; defaults to the topmost conv feature
};

struct DenoiserTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double max_grad_norm = 1.0;  // global clip on the mean batch gradient; 0 disables
  std::uint64_t seed = 1;

  void validate() const;
};

struct DenoiserTrainLog {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-pass loss after each epoch
};

/// Mean guidance loss over the pairs.
double guidance_loss(const Denoiser& net, std::span<const DenoisePair> pairs, const Guidance& guidance);

/// Seeded mini-batch SGD on the denoiser weights only. The guide is read, never written.
Denoiser train_denoiser(Denoiser net, std::span<const DenoisePair> pairs, const Guidance& guidance,
                        const DenoiserTrainConfig& cfg, DenoiserTrainLog* log = nullptr);

}  // namespace advarena
