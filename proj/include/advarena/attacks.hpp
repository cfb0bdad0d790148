#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advarena/model.hpp"
#include "advarena/ops.hpp"
#include "advarena/rng.hpp"
#include "advarena/tensor.hpp"

namespace advarena {

/// Per-batch perturbation sizes used by the arena.
inline constexpr std::array<double, 4> kArenaEpsilons = {4.0 / 255.0, 8.0 / 255.0, 12.0 / 255.0, 16.0 / 255.0};

enum class Fusion { logit_fuse, prob_ensemble, loss_ensemble };

std::string to_string(Fusion f);
Fusion fusion_from_string(const std::string& s);

struct EnsembleMember {
  const Classifier* model = nullptr;
  double weight = 1.0;
};

/// Weighted set of classifiers attacked jointly. Weights are non-negative and sum to 1.
struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  Fusion fusion = Fusion::logit_fuse;

  static EnsembleSpec single(const Classifier& model, Fusion fusion = Fusion::logit_fuse);
  static EnsembleSpec uniform(std::span<const Classifier* const> models, Fusion fusion);

  void validate() const;
};

/// Loss of the fused ensemble at (x, label) and its exact input gradient.
///   logit_fuse:    J(sum_k w_k f_k(x), label)
///   prob_ensemble: -log(sum_k w_k softmax(f_k(x))[label])
///   loss_ensemble: sum_k w_k J(f_k(x), label)
ops::LossGrad ensemble_loss_grad(const EnsembleSpec& ens, const Tensor& x, std::size_t label);

/// Attack hyper-parameters shared by the iterative family. Unused fields are ignored by attacks that do
/// not need them.
struct AttackConfig {
  double epsilon = 16.0 / 255.0;
  std::size_t steps = 10;
  std::optional<double> step_size;  // defaults to epsilon / steps
  double momentum = 1.0;
  bool random_start = false;
  std::optional<double> random_start_magnitude;  // defaults to epsilon
  bool targeted = false;

  // augmented ensemble attack
  std::size_t aug_samples = 0;
  double warp_spread = 0.05;
  std::vector<double> step_schedule;                  // alpha per step; overrides steps/step_size when set
  std::vector<std::vector<std::size_t>> active_sets;  // model indices per step; empty = all models

  // dynamic iterative ensemble
  double gate_threshold = 0.05;      // targeted: drop a model once its target loss < threshold
  std::optional<double> gate_ceiling;  // non-targeted: drop a model once its true-label loss > ceiling
  std::vector<std::size_t> preassigned_iterations;  // per model; overrides gating when non-empty

  std::uint64_t seed = 0;

  double alpha() const { return step_size ? *step_size : epsilon / static_cast<double>(steps); }
  void validate() const;
};

/// Counters recorded by the instrumented attacks.
struct AttackDiagnostics {
  std::vector<std::size_t> loss_evaluations;  // per model
  std::size_t noop_steps = 0;
  std::vector<std::vector<std::size_t>> active_per_step;
};

/// Clamps x_adv into [x_clean - eps, x_clean + eps] intersected with [0,1].
Tensor project_linf(const Tensor& x_adv, const Tensor& x_clean, double epsilon);

/// Single signed-gradient step of size epsilon followed by projection.
Tensor fgsm(const Classifier& model, const Tensor& x, std::size_t label, double epsilon);

/// Basic iterative method; with cfg.targeted it descends the target-label loss instead (iterative target
/// class method). cfg.random_start begins from a seeded uniform point in the epsilon ball.
Tensor iterative(const EnsembleSpec& ens, const Tensor& x, std::size_t label, const AttackConfig& cfg);

/// Momentum accumulators: mu * g + grad / max(|grad|_1, 1e-12) and mu * g + grad / max(std(grad), 1e-12).
Tensor momentum_update_l1(const Tensor& g, const Tensor& grad, double mu);
Tensor momentum_update_std(const Tensor& g, const Tensor& grad, double mu);

/// Momentum iterative method with L1-normalised gradients and sign steps.
Tensor mim_nontargeted(const EnsembleSpec& ens, const Tensor& x, std::size_t label, const AttackConfig& cfg);

/// Targeted momentum variant: std-normalised gradients and steps alpha * clip(round(g), -2, 2).
Tensor mim_targeted(const EnsembleSpec& ens, const Tensor& x, std::size_t target, const AttackConfig& cfg);

/// Iteration count used by the targeted momentum attack: 40 below 8/255, 20 otherwise.
std::size_t default_targeted_iterations(double epsilon);

/// Loss-ensemble iterative attack in which each model drops out once its loss is "done" (see AttackConfig).
Tensor dynamic_iterative_ensemble(std::span<const Classifier* const> models, const Tensor& x, std::size_t label,
                                  const AttackConfig& cfg, AttackDiagnostics* diagnostics = nullptr);

/// Iterated sign attack on the pseudo-label of `pseudo_model`, averaging gradients over random projective
/// warps of the input and over the models active at each step.
Tensor augmented_ensemble_attack(std::span<const Classifier* const> models, const Classifier& pseudo_model,
                                 const Tensor& x, const AttackConfig& cfg);

/// Default augmented-attack schedule: 8 steps, eps/4 for three steps then eps/8; all models for four steps,
/// then only the models flagged as adversarially trained.
void apply_default_augmented_schedule(AttackConfig& cfg, std::span<const bool> adversarially_trained);

/// Random projective warp close to the identity, pivoting on the image centre.
ops::WarpParams sample_warp(std::size_t height, std::size_t width, double spread, Rng& rng);

}  // namespace advarena
