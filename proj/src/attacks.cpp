#include "advarena/attacks.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace advarena {

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::logit_fuse:
      return "logit_fuse";
    case Fusion::prob_ensemble:
      return "prob_ensemble";
    case Fusion::loss_ensemble:
      return "loss_ensemble";
  }
  return "?";
}

Fusion fusion_from_string(const std::string& s) {
  if (s == "logit_fuse" || s == "logit") return Fusion::logit_fuse;
  if (s == "prob_ensemble" || s == "prob") return Fusion::prob_ensemble;
  if (s == "loss_ensemble" || s == "loss") return Fusion::loss_ensemble;
  throw std::invalid_argument("unknown fusion mode '" + s + "'");
}

EnsembleSpec EnsembleSpec::single(const Classifier& model, Fusion fusion) { return {{{&model, 1.0}}, fusion}; }

EnsembleSpec EnsembleSpec::uniform(std::span<const Classifier* const> models, Fusion fusion) {
  EnsembleSpec e;
  e.fusion = fusion;
  for (const auto* m : models) e.members.push_back({m, 1.0 / static_cast<double>(models.size())});
  return e;
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw std::invalid_argument("ensemble: at least one member required");
  double total = 0.0;
  for (const auto& m : members) {
    if (m.model == nullptr) throw std::invalid_argument("ensemble: null member");
    if (!(m.weight >= 0.0)) throw std::invalid_argument("ensemble: negative weight for " + m.model->name());
    if (m.model->classes() != members.front().model->classes())
      throw std::invalid_argument("ensemble: members disagree on class count");
    total += m.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("ensemble: weights sum to " + std::to_string(total) + ", expected 1");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("attack: epsilon must be in [0,1]");
  if (steps == 0 && step_schedule.empty()) throw std::invalid_argument("attack: steps must be >= 1");
  if (step_size && !(*step_size > 0.0)) throw std::invalid_argument("attack: step size must be positive");
  if (!(momentum >= 0.0)) throw std::invalid_argument("attack: momentum must be >= 0");
  for (double a : step_schedule)
    if (!(a > 0.0)) throw std::invalid_argument("attack: schedule step sizes must be positive");
}

namespace {

// Pulls a logits gradient back to the input of one member.
Tensor pull_back(const Classifier& model, const Trace& trace, Tensor upstream) {
  return model.backward_input(trace, trace.acts.size() - 1, std::move(upstream));
}

// Weighted cross-entropy contribution of one member; the gradient is pulled back with upstream
// weight * dJ/dlogits. Shared by every loss-ensemble code path so their results agree bit for bit.
struct Contribution {
  double loss;
  Tensor grad;
};

Contribution member_contribution(const Classifier& model, double weight, const Tensor& x, std::size_t label) {
  const Trace t = model.forward(x);
  auto ce = ops::softmax_cross_entropy(t.logits(), label);
  return {weight * ce.loss, pull_back(model, t, weight * ce.grad)};
}

void require_label(const EnsembleSpec& ens, std::size_t label) {
  if (label >= ens.members.front().model->classes())
    throw std::invalid_argument("attack: label " + std::to_string(label) + " out of range");
}

Tensor signed_step(const Tensor& x, const Tensor& direction, double alpha) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = direction[i];
    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    out[i] = std::clamp(x[i] + alpha * s, 0.0, 1.0);
  }
  return out;
}

Tensor random_start_point(const Tensor& x, double epsilon, double magnitude, std::uint64_t seed) {
  Rng rng(derive_seed(seed, hash_name("random_start")));
  Tensor out = x;
  for (double& v : out.data()) v = std::clamp(v + rng.uniform(-magnitude, magnitude), 0.0, 1.0);
  return project_linf(out, x, epsilon);
}

}  // namespace

ops::LossGrad ensemble_loss_grad(const EnsembleSpec& ens, const Tensor& x, std::size_t label) {
  ens.validate();
  require_label(ens, label);
  ops::LossGrad out;
  out.grad = Tensor(x.shape());

  switch (ens.fusion) {
    case Fusion::loss_ensemble: {
      for (const auto& m : ens.members) {
        auto c = member_contribution(*m.model, m.weight, x, label);
        out.loss += c.loss;
        out.grad += c.grad;
      }
      break;
    }
    case Fusion::logit_fuse: {
      std::vector<Trace> traces;
      Tensor fused({ens.members.front().model->classes()});
      for (const auto& m : ens.members) {
        traces.push_back(m.model->forward(x));
        axpy(m.weight, traces.back().logits(), fused);
      }
      auto ce = ops::softmax_cross_entropy(fused, label);
      out.loss = ce.loss;
      for (std::size_t k = 0; k < ens.members.size(); ++k)
        out.grad += pull_back(*ens.members[k].model, traces[k], ens.members[k].weight * ce.grad);
      break;
    }
    case Fusion::prob_ensemble: {
      // log-domain mixture: L = -log sum_k w_k exp(a_k), a_k = log p_k[label] = -J_k
      std::vector<Trace> traces;
      std::vector<ops::LossGrad> ces;
      double amax = -std::numeric_limits<double>::infinity();
      for (const auto& m : ens.members) {
        traces.push_back(m.model->forward(x));
        ces.push_back(ops::softmax_cross_entropy(traces.back().logits(), label));
        if (m.weight > 0.0) amax = std::max(amax, -ces.back().loss);
      }
      double s = 0.0;
      std::vector<double> r(ens.members.size());
      for (std::size_t k = 0; k < ens.members.size(); ++k) {
        r[k] = ens.members[k].weight * std::exp(-ces[k].loss - amax);
        s += r[k];
      }
      out.loss = -(amax + std::log(s));
      for (std::size_t k = 0; k < ens.members.size(); ++k) {
        if (r[k] == 0.0) continue;
        // d(-log P)/dz_k = (w_k p_k[y] / P) * (softmax(z_k) - onehot)
        out.grad += pull_back(*ens.members[k].model, traces[k], (r[k] / s) * ces[k].grad);
      }
      break;
    }
  }
  return out;
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x_clean, double epsilon) {
  require_same_shape(x_adv, x_clean, "project_linf");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("project_linf: epsilon must be non-negative");
  Tensor out = x_adv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lo = std::max(x_clean[i] - epsilon, 0.0);
    const double hi = std::min(x_clean[i] + epsilon, 1.0);
    double v = out[i];
    if (!std::isfinite(v)) v = x_clean[i];
    out[i] = std::clamp(v, lo, hi);
  }
  return out;
}

Tensor fgsm(const Classifier& model, const Tensor& x, std::size_t label, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("fgsm: epsilon must be in [0,1]");
  const auto lg = model.loss_grad_input(x, label);
  return project_linf(signed_step(x, lg.grad, epsilon), x, epsilon);
}

Tensor iterative(const EnsembleSpec& ens, const Tensor& x, std::size_t label, const AttackConfig& cfg) {
  cfg.validate();
  ens.validate();
  require_label(ens, label);
  const double alpha = cfg.alpha();
  const double direction = cfg.targeted ? -1.0 : 1.0;
  Tensor adv = cfg.random_start
                   ? random_start_point(x, cfg.epsilon, cfg.random_start_magnitude.value_or(cfg.epsilon), cfg.seed)
                   : x;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    Tensor g = ensemble_loss_grad(ens, adv, label).grad;
    if (direction < 0) g *= -1.0;
    adv = project_linf(signed_step(adv, g, alpha), x, cfg.epsilon);
  }
  return adv;
}

Tensor momentum_update_l1(const Tensor& g, const Tensor& grad, double mu) {
  Tensor out = g;
  out *= mu;
  axpy(1.0 / std::max(l1_norm(grad), 1e-12), grad, out);
  return out;
}

Tensor momentum_update_std(const Tensor& g, const Tensor& grad, double mu) {
  Tensor out = g;
  out *= mu;
  axpy(1.0 / std::max(stddev(grad), 1e-12), grad, out);
  return out;
}

Tensor mim_nontargeted(const EnsembleSpec& ens, const Tensor& x, std::size_t label, const AttackConfig& cfg) {
  cfg.validate();
  ens.validate();
  require_label(ens, label);
  const double alpha = cfg.alpha();
  Tensor g(x.shape());
  Tensor adv = x;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    g = momentum_update_l1(g, ensemble_loss_grad(ens, adv, label).grad, cfg.momentum);
    adv = signed_step(adv, g, alpha);
  }
  return project_linf(adv, x, cfg.epsilon);
}

Tensor mim_targeted(const EnsembleSpec& ens, const Tensor& x, std::size_t target, const AttackConfig& cfg) {
  cfg.validate();
  ens.validate();
  require_label(ens, target);
  const double alpha = cfg.alpha();
  Tensor g(x.shape());
  Tensor adv = x;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    g = momentum_update_std(g, ensemble_loss_grad(ens, adv, target).grad, cfg.momentum);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double q = std::clamp(std::round(g[i]), -2.0, 2.0);
      adv[i] = std::clamp(adv[i] - alpha * q, 0.0, 1.0);
    }
  }
  return project_linf(adv, x, cfg.epsilon);
}

std::size_t default_targeted_iterations(double epsilon) { return epsilon < 8.0 / 255.0 ? 40 : 20; }

Tensor dynamic_iterative_ensemble(std::span<const Classifier* const> models, const Tensor& x, std::size_t label,
                                  const AttackConfig& cfg, AttackDiagnostics* diagnostics) {
  cfg.validate();
  if (models.empty()) throw std::invalid_argument("dynamic ensemble: no models");
  const std::size_t M = models.size();
  if (!cfg.preassigned_iterations.empty() && cfg.preassigned_iterations.size() != M)
    throw std::invalid_argument("dynamic ensemble: preassigned iterations must list every model");
  if (cfg.preassigned_iterations.empty() && cfg.targeted && !(cfg.gate_threshold >= 0.0))
    throw std::invalid_argument("dynamic ensemble: gate threshold must be >= 0");
  for (const auto* m : models)
    if (label >= m->classes()) throw std::invalid_argument("dynamic ensemble: label out of range");

  AttackDiagnostics local;
  AttackDiagnostics& diag = diagnostics ? *diagnostics : local;
  diag.loss_evaluations.assign(M, 0);
  diag.noop_steps = 0;
  diag.active_per_step.clear();

  const double weight = 1.0 / static_cast<double>(M);
  const double alpha = cfg.alpha();
  std::vector<bool> active(M, true);
  Tensor adv = cfg.random_start
                   ? random_start_point(x, cfg.epsilon, cfg.random_start_magnitude.value_or(cfg.epsilon), cfg.seed)
                   : x;

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    if (!cfg.preassigned_iterations.empty())
      for (std::size_t k = 0; k < M; ++k) active[k] = t < cfg.preassigned_iterations[k];

    Tensor grad(x.shape());
    std::vector<std::size_t> used;
    for (std::size_t k = 0; k < M; ++k) {
      if (!active[k]) continue;
      const Trace tr = models[k]->forward(adv);
      auto ce = ops::softmax_cross_entropy(tr.logits(), label);
      ++diag.loss_evaluations[k];
      if (cfg.preassigned_iterations.empty()) {
        const bool done = cfg.targeted ? ce.loss < cfg.gate_threshold
                                       : (cfg.gate_ceiling && ce.loss > *cfg.gate_ceiling);
        if (done) {
          active[k] = false;
          continue;
        }
      }
      grad += pull_back(*models[k], tr, weight * ce.grad);
      used.push_back(k);
    }
    diag.active_per_step.push_back(used);
    if (used.empty()) {
      ++diag.noop_steps;
      continue;
    }
    if (cfg.targeted) grad *= -1.0;
    adv = project_linf(signed_step(adv, grad, alpha), x, cfg.epsilon);
  }
  return adv;
}

ops::WarpParams sample_warp(std::size_t height, std::size_t width, double spread, Rng& rng) {
  std::array<double, 8> u{};
  for (double& v : u) v = rng.uniform(-1.0, 1.0);
  if (spread == 0.0) return ops::WarpParams::identity();
  const double cx = 0.5 * static_cast<double>(width - 1), cy = 0.5 * static_cast<double>(height - 1);
  const double scale = 0.5 * static_cast<double>(std::max(height, width));
  // A = I + E in centred coordinates; perspective terms scaled by the image size.
  const double a[3][3] = {{1.0 + spread * u[0], spread * u[1], spread * scale * 0.5 * u[2]},
                          {spread * u[3], 1.0 + spread * u[4], spread * scale * 0.5 * u[5]},
                          {spread * 0.1 * u[6] / scale, spread * 0.1 * u[7] / scale, 1.0}};
  // M = T(c) * A * T(-c)
  double m[3][3];
  const double tneg[3][3] = {{1, 0, -cx}, {0, 1, -cy}, {0, 0, 1}};
  const double tpos[3][3] = {{1, 0, cx}, {0, 1, cy}, {0, 0, 1}};
  double tmp[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      tmp[i][j] = 0;
      for (int k = 0; k < 3; ++k) tmp[i][j] += a[i][k] * tneg[k][j];
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      m[i][j] = 0;
      for (int k = 0; k < 3; ++k) m[i][j] += tpos[i][k] * tmp[k][j];
    }
  ops::WarpParams p;
  const double n = m[2][2];
  p.theta = {m[0][0] / n, m[0][1] / n, m[0][2] / n, m[1][0] / n, m[1][1] / n, m[1][2] / n, m[2][0] / n, m[2][1] / n};
  return p.valid() ? p : ops::WarpParams::identity();
}

void apply_default_augmented_schedule(AttackConfig& cfg, std::span<const bool> adversarially_trained) {
  cfg.step_schedule.clear();
  cfg.active_sets.clear();
  std::vector<std::size_t> all, adv_only;
  for (std::size_t k = 0; k < adversarially_trained.size(); ++k) {
    all.push_back(k);
    if (adversarially_trained[k]) adv_only.push_back(k);
  }
  if (adv_only.empty()) adv_only = all;
  for (std::size_t i = 0; i < 8; ++i) {
    cfg.step_schedule.push_back(i < 3 ? cfg.epsilon / 4.0 : cfg.epsilon / 8.0);
    cfg.active_sets.push_back(i < 4 ? all : adv_only);
  }
}

Tensor augmented_ensemble_attack(std::span<const Classifier* const> models, const Classifier& pseudo_model,
                                 const Tensor& x, const AttackConfig& cfg) {
  cfg.validate();
  if (models.empty()) throw std::invalid_argument("augmented attack: no models");
  const std::size_t n_steps = cfg.step_schedule.empty() ? cfg.steps : cfg.step_schedule.size();
  auto active_at = [&](std::size_t t) {
    std::vector<std::size_t> set;
    if (cfg.active_sets.empty() || cfg.active_sets.size() <= t) {
      for (std::size_t k = 0; k < models.size(); ++k) set.push_back(k);
    } else {
      set = cfg.active_sets[t];
    }
    for (auto k : set)
      if (k >= models.size()) throw std::invalid_argument("augmented attack: active set names unknown model");
    return set;
  };
  bool any_active = false;
  for (std::size_t t = 0; t < n_steps; ++t) any_active = any_active || !active_at(t).empty();
  if (!any_active) throw std::invalid_argument("augmented attack: active set is empty at every step");

  const std::size_t pseudo_label = pseudo_model.predict(x);
  Tensor adv = cfg.random_start
                   ? random_start_point(x, cfg.epsilon, cfg.random_start_magnitude.value_or(cfg.epsilon), cfg.seed)
                   : x;
  Rng warp_rng(derive_seed(cfg.seed, hash_name("warp")));
  const std::size_t H = x.dim(1), W = x.dim(2);

  for (std::size_t t = 0; t < n_steps; ++t) {
    const double alpha = cfg.step_schedule.empty() ? cfg.alpha() : cfg.step_schedule[t];
    const auto set = active_at(t);
    if (set.empty()) continue;
    const double weight = 1.0 / static_cast<double>(set.size());
    Tensor grad(x.shape());
    for (auto k : set) {
      if (cfg.aug_samples == 0) {
        grad += member_contribution(*models[k], weight, adv, pseudo_label).grad;
        continue;
      }
      const double sample_weight = weight / static_cast<double>(cfg.aug_samples);
      for (std::size_t s = 0; s < cfg.aug_samples; ++s) {
        const auto theta = sample_warp(H, W, cfg.warp_spread, warp_rng);
        const Tensor warped = ops::projective_warp(adv, theta);
        auto c = member_contribution(*models[k], sample_weight, warped, pseudo_label);
        grad += ops::projective_warp_backward(c.grad, theta);
      }
    }
    adv = project_linf(signed_step(adv, grad, alpha), x, cfg.epsilon);
  }
  return adv;
}

}  // namespace advarena
