#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advarena/dataset.hpp"
#include "advarena/model.hpp"
#include "advarena/tensor.hpp"

namespace advarena {

struct AttackNetSpec {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t features = 16;
  std::size_t coarse_features = 16;
  std::vector<double> epsilons;  // one output head per entry
  bool gradient_hint = false;    // extra input channels: sign of the hint model's gradient

  std::size_t input_channels() const { return gradient_hint ? 2 * channels : channels; }
  void validate() const;
};

/// Fully convolutional perturbation generator. Head h emits eps_h * tanh(z_h), so every head is bounded by its
/// epsilon before any clipping. The last conv starts at zero, so an untrained net perturbs nothing.
class AttackNet {
 public:
  struct Trace {
    Tensor input;
    std::vector<Tensor> pre;  // e1, e2, e3
    std::vector<Tensor> post;
    Tensor concat;
    Tensor z;  // [heads * C, H, W]
  };

  AttackNet() = default;
  AttackNet(std::string name, AttackNetSpec spec, std::vector<Tensor> weights);
  static AttackNet build(std::string name, const AttackNetSpec& spec, std::uint64_t seed);

  const std::string& name() const { return name_; }
  const AttackNetSpec& spec() const { return spec_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  std::vector<Tensor>& mutable_weights() { return weights_; }

  /// Index of the head trained for epsilon; throws if there is none (1e-9 tolerance).
  std::size_t head_for(double epsilon) const;

  /// `input` is the image, optionally with the hint channels appended.
  Trace forward(const Tensor& input) const;
  /// Perturbation of head h (before adding to the image).
  Tensor perturbation(const Trace& trace, std::size_t head) const;
  /// Parameter gradients given the upstream gradient on every head's perturbation.
  std::vector<Tensor> backward(const Trace& trace, const std::vector<Tensor>& upstream_perturbations) const;

  void save(const std::filesystem::path& path) const;
  static AttackNet load(const std::filesystem::path& path);

 private:
  std::string name_;
  AttackNetSpec spec_;
  std::vector<Tensor> weights_;
};

/// sign of the input gradient of `hint_model` at its own prediction.
Tensor gradient_hint(const Classifier& hint_model, const Tensor& x);

struct AttackNetTrainConfig {
  std::size_t epochs = 4;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Gradient ascent on sum over heads and target models of J(f(clip01(x + a_h(x))), y).
/// `hint_model` is required iff `spec.gradient_hint` is set.
AttackNet train_attack_fcn(AttackNet net, std::span<const Classifier* const> targets,
                           std::span<const ImageRecord> data, const AttackNetTrainConfig& cfg,
                           const Classifier* hint_model = nullptr);

/// project_linf(clip01(x + a_h(x)), x, eps) using the head trained for eps.
Tensor apply_attack_fcn(const AttackNet& net, const Tensor& x, double epsilon, const Classifier* hint_model = nullptr);

}  // namespace advarena
