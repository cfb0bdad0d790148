#include "advarena/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advarena/attacks.hpp"
#include "advarena/rng.hpp"
#include "advarena/weights_io.hpp"
#include "netutil.hpp"

namespace advarena {

using detail::conv_backward;
using detail::conv_forward;

void DenoiserSpec::validate() const {
  if (channels == 0 || features == 0 || coarse_features == 0)
    throw std::invalid_argument("denoiser spec: zero channel count");
  if (height < 4 || width < 4 || height % 2 != 0 || width % 2 != 0)
    throw std::invalid_argument("denoiser spec: height and width must be even and >= 4");
}

namespace {

// conv layer table: {out, in, kernel, stride, pad}
struct ConvDef {
  std::size_t out, in, k, stride, pad;
};

std::vector<ConvDef> conv_defs(const DenoiserSpec& s) {
  const std::size_t f = s.features, g = s.coarse_features, c = s.channels;
  return {{f, c, 3, 1, 1}, {g, f, 4, 2, 1}, {g, g, 3, 1, 1}, {g, g, 3, 1, 1}, {f, g + f, 3, 1, 1}, {c, f, 3, 1, 1}};
}

}  // namespace

Denoiser::Denoiser(std::string name, DenoiserSpec spec, std::vector<Tensor> weights)
    : name_(std::move(name)), spec_(spec), weights_(std::move(weights)) {
  spec_.validate();
  const auto defs = conv_defs(spec_);
  if (weights_.size() != 2 * defs.size())
    throw std::invalid_argument("denoiser " + name_ + ": expected " + std::to_string(2 * defs.size()) +
                                " weight tensors, got " + std::to_string(weights_.size()));
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const auto& d = defs[i];
    if (weights_[2 * i].shape() != Shape{d.out, d.in, d.k, d.k} || weights_[2 * i + 1].shape() != Shape{d.out})
      throw std::invalid_argument("denoiser " + name_ + ": layer " + std::to_string(i) + " has wrong weight shape");
  }
}

Denoiser Denoiser::build(std::string name, const DenoiserSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Tensor> w;
  const auto defs = conv_defs(spec);
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const auto& d = defs[i];
    const Shape ks{d.out, d.in, d.k, d.k};
    w.push_back(i + 1 == defs.size() ? Tensor(ks) : detail::he_uniform(ks, rng));
    w.emplace_back(Shape{d.out});
  }
  return Denoiser(std::move(name), spec, std::move(w));
}

void Denoiser::check_input(const Tensor& x) const {
  if (x.shape() != spec_.input_shape())
    throw std::invalid_argument("denoiser " + name_ + ": input shape " + shape_str(x.shape()) + ", expected " +
                                shape_str(spec_.input_shape()));
}

Denoiser::Trace Denoiser::forward(const Tensor& x) const {
  check_input(x);
  const auto defs = conv_defs(spec_);
  Trace t;
  t.input = x;
  auto layer = [&](std::size_t i, const Tensor& in) {
    t.pre.push_back(conv_forward(in, weights_[2 * i], weights_[2 * i + 1], defs[i].stride, defs[i].pad));
    t.post.push_back(ops::relu(t.pre.back()));
    return t.post.back();
  };
  const Tensor a1 = layer(0, x);
  layer(1, a1);
  layer(2, t.post[1]);
  layer(3, t.post[2]);
  t.concat = ops::concat_channels(ops::upsample_nearest(t.post[3], 2), t.post[0]);
  layer(4, t.concat);
  t.noise = conv_forward(t.post[4], weights_[10], weights_[11], 1, 1);
  return t;
}

std::vector<Tensor> Denoiser::backward(const Trace& t, const Tensor& upstream) const {
  const auto defs = conv_defs(spec_);
  auto grads = detail::zeros_like(weights_);
  auto back = [&](std::size_t i, const Tensor& in, const Tensor& up) {
    return conv_backward(in, weights_[2 * i], defs[i].stride, defs[i].pad, up, grads[2 * i], grads[2 * i + 1]);
  };
  Tensor g = back(5, t.post[4], upstream.reshaped(t.noise.shape()));
  g = back(4, t.concat, ops::relu_backward(t.pre[4], g));
  auto [g_up, g_skip] = ops::split_channels(g, spec_.coarse_features);
  g = ops::upsample_nearest_backward(g_up, 2);
  g = back(3, t.post[2], ops::relu_backward(t.pre[3], g));
  g = back(2, t.post[1], ops::relu_backward(t.pre[2], g));
  g = back(1, t.post[0], ops::relu_backward(t.pre[1], g));
  g += g_skip;
  back(0, t.input, ops::relu_backward(t.pre[0], g));
  return grads;
}

std::uint64_t Denoiser::weights_hash() const { return hash_tensors(weights_); }

void Denoiser::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  os << "kind denoiser\nname " << name_ << "\ninput " << spec_.channels << ' ' << spec_.height << ' ' << spec_.width
     << "\nfeatures " << spec_.features << ' ' << spec_.coarse_features << '\n';
  write_weights_file(path, {os.str(), weights_});
}

Denoiser Denoiser::load(const std::filesystem::path& path) {
  auto f = read_weights_file(path);
  std::istringstream is(f.spec_text);
  std::string line, kind, name;
  DenoiserSpec spec;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") ls >> kind;
    else if (key == "name") ls >> name;
    else if (key == "input") ls >> spec.channels >> spec.height >> spec.width;
    else if (key == "features") ls >> spec.features >> spec.coarse_features;
  }
  if (kind != "denoiser") throw FormatError(path.string() + ": spec tag is '" + kind + "', expected 'denoiser'");
  try {
    return Denoiser(name, spec, std::move(f.tensors));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor denoise(const Denoiser& net, const Tensor& x_adv) { return ops::clip01(x_adv - net.predict_noise(x_adv)); }

// ---- training set ----------------------------------------------------------------------------------

std::vector<DenoisePair> generate_trainset(std::span<const DenoiseRecipe> recipes, std::span<const ImageRecord> data,
                                           std::size_t n_classes, std::size_t per_class_count, std::uint64_t seed) {
  if (recipes.empty()) throw std::invalid_argument("denoiser trainset: no attack recipes");
  if (per_class_count == 0) throw std::invalid_argument("denoiser trainset: per-class count must be >= 1");
  for (const auto& r : recipes)
    if (r.models.empty()) throw std::invalid_argument("denoiser trainset: recipe '" + r.tag + "' has no models");

  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].true_label >= n_classes)
      throw std::invalid_argument("denoiser trainset: record " + data[i].id + " has label out of range");
    by_class[data[i].true_label].push_back(i);
  }
  Rng pick_rng(derive_seed(seed, hash_name("pick")));
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < per_class_count) {
      const auto& names = shape_class_names();
      const std::string cname = c < names.size() ? names[c] : "class";
      throw std::invalid_argument("denoiser trainset: class " + std::to_string(c) + " (" + cname + ") has " +
                                  std::to_string(idx.size()) + " images, need " + std::to_string(per_class_count));
    }
    pick_rng.shuffle(idx);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class_count));
  }

  std::vector<DenoisePair> out;
  out.reserve(chosen.size());
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    const auto& rec = data[chosen[j]];
    Rng rng(derive_seed(seed, "pair", j));
    const auto& recipe = recipes[rng.uniform_int(recipes.size())];
    const double eps = kArenaEpsilons[rng.uniform_int(kArenaEpsilons.size())];
    const auto ens = EnsembleSpec::uniform(recipe.models, Fusion::logit_fuse);
    AttackConfig cfg;
    cfg.epsilon = eps;
    if (recipe.attack == RecipeAttack::fgsm) {
      cfg.steps = 1;
      cfg.step_size = eps;
    } else {
      cfg.steps = recipe.steps;
    }
    out.push_back({rec.pixels, iterative(ens, rec.pixels, rec.true_label, cfg), rec.true_label, recipe.tag, eps});
  }
  return out;
}

// ---- training --------------------------------------------------------------------------------------

std::string to_string(GuidanceKind k) {
  switch (k) {
    case GuidanceKind::pixel:
      return "pixel";
    case GuidanceKind::fgd:
      return "fgd";
    case GuidanceKind::lgd:
      return "lgd";
    case GuidanceKind::cgd:
      return "cgd";
  }
  return "?";
}

GuidanceKind guidance_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "pixel") return GuidanceKind::pixel;
  if (l == "fgd") return GuidanceKind::fgd;
  if (l == "lgd") return GuidanceKind::lgd;
  if (l == "cgd") return GuidanceKind::cgd;
  throw std::invalid_argument("unknown guidance kind '" + s + "'");
}

void DenoiserTrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("denoiser training: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("denoiser training: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("denoiser training: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("denoiser training: momentum must be in [0,1)");
  if (!(max_grad_norm >= 0.0)) throw std::invalid_argument("denoiser training: max_grad_norm must be >= 0");
}

namespace {

// Resolved guidance: which trace level of the guide is compared (none for pixel and CGD).
struct ResolvedGuidance {
  GuidanceKind kind;
  const Classifier* guide;
  std::size_t level;
};

ResolvedGuidance resolve(const Guidance& g) {
  if (g.kind == GuidanceKind::pixel) return {g.kind, nullptr, 0};
  if (g.guide == nullptr) throw std::invalid_argument("denoiser training: " + to_string(g.kind) + " needs a guide model");
  const std::size_t logits_level = g.guide->spec().layers.size();
  if (g.kind == GuidanceKind::fgd) {
    const auto top = g.guide->spec().topmost_conv_feature();
    if (!top) throw std::invalid_argument("denoiser training: FGD guide " + g.guide->name() + " has no conv layers");
    if (g.layer && *g.layer != *top)
      throw std::invalid_argument("denoiser training: FGD layer must be the topmost conv feature (level " +
                                  std::to_string(*top) + ")");
    return {g.kind, g.guide, *top};
  }
  return {g.kind, g.guide, logits_level};
}

// Mean absolute difference and its gradient with respect to a.
double l1_mean(const Tensor& a, const Tensor& b, Tensor* grad) {
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  if (grad) *grad = Tensor(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += std::abs(d);
    if (grad) (*grad)[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
  }
  return s / n;
}

// Loss of one pair; when grads is set, also accumulates denoiser parameter gradients.
double pair_loss(const Denoiser& net, const DenoisePair& p, const ResolvedGuidance& g,
                 std::vector<Tensor>* grads) {
  const auto tr = net.forward(p.adversarial);
  const Tensor z = p.adversarial - tr.noise;
  const Tensor x_hat = ops::clip01(z);
  double loss = 0.0;
  Tensor g_hat;
  Tensor* gp = grads ? &g_hat : nullptr;
  switch (g.kind) {
    case GuidanceKind::pixel:
      loss = l1_mean(x_hat, p.clean, gp);
      break;
    case GuidanceKind::fgd:
    case GuidanceKind::lgd: {
      const Trace ref = g.guide->forward(p.clean);
      const Trace cur = g.guide->forward(x_hat);
      Tensor up;
      loss = l1_mean(cur.acts[g.level], ref.acts[g.level], grads ? &up : nullptr);
      if (grads) g_hat = g.guide->backward_input(cur, g.level, std::move(up));
      break;
    }
    case GuidanceKind::cgd: {
      const Trace cur = g.guide->forward(x_hat);
      auto ce = ops::softmax_cross_entropy(cur.logits(), p.true_label);
      loss = ce.loss;
      if (grads) g_hat = g.guide->backward_input(cur, cur.acts.size() - 1, std::move(ce.grad));
      break;
    }
  }
  if (grads) {
    // x_hat = clip01(x_adv - noise): d/d noise = -1 inside the clip range, 0 outside
    Tensor up_noise(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) up_noise[i] = (z[i] >= 0.0 && z[i] <= 1.0) ? -g_hat[i] : 0.0;
    auto pg = net.backward(tr, up_noise);
    for (std::size_t k = 0; k < pg.size(); ++k) (*grads)[k] += pg[k];
  }
  return loss;
}

}  // namespace

double guidance_loss(const Denoiser& net, std::span<const DenoisePair> pairs, const Guidance& guidance) {
  if (pairs.empty()) throw std::invalid_argument("guidance loss: no pairs");
  const auto g = resolve(guidance);
  double s = 0.0;
  for (const auto& p : pairs) s += pair_loss(net, p, g, nullptr);
  return s / static_cast<double>(pairs.size());
}

Denoiser train_denoiser(Denoiser net, std::span<const DenoisePair> pairs, const Guidance& guidance,
                        const DenoiserTrainConfig& cfg, DenoiserTrainLog* log) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("denoiser training: no pairs");
  const auto g = resolve(guidance);
  if (log) {
    log->initial_loss = guidance_loss(net, pairs, guidance);
    log->epoch_loss.clear();
  }
  detail::MomentumSgd opt(net.weights(), cfg.learning_rate, cfg.momentum, cfg.max_grad_norm);
  Rng shuffle_rng(derive_seed(cfg.seed, hash_name("shuffle")));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto grads = detail::zeros_like(net.weights());
      for (std::size_t i = start; i < end; ++i) pair_loss(net, pairs[order[i]], g, &grads);
      opt.step(net.mutable_weights(), grads, 1.0 / static_cast<double>(end - start));
    }
    if (log) log->epoch_loss.push_back(guidance_loss(net, pairs, guidance));
  }
  for (const auto& w : net.weights())
    if (!all_finite(w)) throw std::runtime_error("denoiser training diverged (non-finite weights)");
  return net;
}

}  // namespace advarena
