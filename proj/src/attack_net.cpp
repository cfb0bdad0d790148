#include "advarena/attack_net.hpp"

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

void AttackNetSpec::validate() const {
  if (channels == 0 || features == 0 || coarse_features == 0)
    throw std::invalid_argument("attack net spec: zero channel count");
  if (height < 4 || width < 4 || height % 2 != 0 || width % 2 != 0)
    throw std::invalid_argument("attack net spec: height and width must be even and >= 4");
  if (epsilons.empty()) throw std::invalid_argument("attack net spec: at least one epsilon head required");
  for (double e : epsilons)
    if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("attack net spec: head epsilon must be in (0,1]");
}

namespace {

struct ConvDef {
  std::size_t out, in, k, stride, pad;
};

std::vector<ConvDef> conv_defs(const AttackNetSpec& s) {
  const std::size_t f = s.features, g = s.coarse_features;
  return {{f, s.input_channels(), 3, 1, 1},
          {g, f, 4, 2, 1},
          {g, g, 3, 1, 1},
          {s.channels * s.epsilons.size(), g + f, 3, 1, 1}};
}

}  // namespace

AttackNet::AttackNet(std::string name, AttackNetSpec spec, std::vector<Tensor> weights)
    : name_(std::move(name)), spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  const auto defs = conv_defs(spec_);
  if (weights_.size() != 2 * defs.size())
    throw std::invalid_argument("attack net " + name_ + ": expected " + std::to_string(2 * defs.size()) +
                                " weight tensors");
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const auto& d = defs[i];
    if (weights_[2 * i].shape() != Shape{d.out, d.in, d.k, d.k} || weights_[2 * i + 1].shape() != Shape{d.out})
      throw std::invalid_argument("attack net " + name_ + ": layer " + std::to_string(i) + " has wrong weight shape");
  }
}

AttackNet AttackNet::build(std::string name, const AttackNetSpec& spec, std::uint64_t seed) {
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
  return AttackNet(std::move(name), spec, std::move(w));
}

std::size_t AttackNet::head_for(double epsilon) const {
  for (std::size_t h = 0; h < spec_.epsilons.size(); ++h)
    if (std::abs(spec_.epsilons[h] - epsilon) <= 1e-9) return h;
  throw std::invalid_argument("attack net " + name_ + ": no head trained for epsilon " + std::to_string(epsilon));
}

AttackNet::Trace AttackNet::forward(const Tensor& input) const {
  const Shape expect{spec_.input_channels(), spec_.height, spec_.width};
  if (input.shape() != expect)
    throw std::invalid_argument("attack net " + name_ + ": input shape " + shape_str(input.shape()) + ", expected " +
                                shape_str(expect));
  const auto defs = conv_defs(spec_);
  Trace t;
  t.input = input;
  const Tensor* in = &input;
  for (std::size_t i = 0; i < 3; ++i) {
    t.pre.push_back(conv_forward(*in, weights_[2 * i], weights_[2 * i + 1], defs[i].stride, defs[i].pad));
    t.post.push_back(ops::relu(t.pre.back()));
    in = &t.post.back();
  }
  t.concat = ops::concat_channels(ops::upsample_nearest(t.post[2], 2), t.post[0]);
  t.z = conv_forward(t.concat, weights_[6], weights_[7], 1, 1);
  return t;
}

Tensor AttackNet::perturbation(const Trace& t, std::size_t head) const {
  const std::size_t C = spec_.channels, plane = spec_.height * spec_.width;
  const double eps = spec_.epsilons.at(head);
  Tensor a({C, spec_.height, spec_.width});
  for (std::size_t i = 0; i < C * plane; ++i) a[i] = eps * std::tanh(t.z[head * C * plane + i]);
  return a;
}

std::vector<Tensor> AttackNet::backward(const Trace& t, const std::vector<Tensor>& upstream) const {
  if (upstream.size() != spec_.epsilons.size())
    throw std::invalid_argument("attack net backward: need one upstream tensor per head");
  const auto defs = conv_defs(spec_);
  const std::size_t C = spec_.channels, plane = spec_.height * spec_.width;
  Tensor gz(t.z.shape());
  for (std::size_t h = 0; h < upstream.size(); ++h) {
    const double eps = spec_.epsilons[h];
    for (std::size_t i = 0; i < C * plane; ++i) {
      const double th = std::tanh(t.z[h * C * plane + i]);
      gz[h * C * plane + i] = upstream[h][i] * eps * (1.0 - th * th);
    }
  }
  auto grads = detail::zeros_like(weights_);
  auto back = [&](std::size_t i, const Tensor& in, const Tensor& up) {
    return conv_backward(in, weights_[2 * i], defs[i].stride, defs[i].pad, up, grads[2 * i], grads[2 * i + 1]);
  };
  Tensor g = back(3, t.concat, gz);
  auto [g_up, g_skip] = ops::split_channels(g, spec_.coarse_features);
  g = ops::upsample_nearest_backward(g_up, 2);
  g = back(2, t.post[1], ops::relu_backward(t.pre[2], g));
  g = back(1, t.post[0], ops::relu_backward(t.pre[1], g));
  g += g_skip;
  back(0, t.input, ops::relu_backward(t.pre[0], g));
  return grads;
}

void AttackNet::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  os.precision(17);
  os << "kind attack_net\nname " << name_ << "\ninput " << spec_.channels << ' ' << spec_.height << ' '
     << spec_.width << "\nfeatures " << spec_.features << ' ' << spec_.coarse_features << "\nhint "
     << (spec_.gradient_hint ? 1 : 0) << "\nepsilons";
  for (double e : spec_.epsilons) os << ' ' << e;
  os << '\n';
  write_weights_file(path, {os.str(), weights_});
}

AttackNet AttackNet::load(const std::filesystem::path& path) {
  auto f = read_weights_file(path);
  std::istringstream is(f.spec_text);
  std::string line, kind, name;
  AttackNetSpec spec;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind") {
      ls >> kind;
    } else if (key == "name") {
      ls >> name;
    } else if (key == "input") {
      ls >> spec.channels >> spec.height >> spec.width;
    } else if (key == "features") {
      ls >> spec.features >> spec.coarse_features;
    } else if (key == "hint") {
      int h = 0;
      ls >> h;
      spec.gradient_hint = h != 0;
    } else if (key == "epsilons") {
      double e;
      while (ls >> e) spec.epsilons.push_back(e);
    }
  }
  if (kind != "attack_net") throw FormatError(path.string() + ": spec tag is '" + kind + "', expected 'attack_net'");
  try {
    return AttackNet(name, std::move(spec), std::move(f.tensors));
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor gradient_hint(const Classifier& hint_model, const Tensor& x) {
  return ops::sign(hint_model.loss_grad_input(x, hint_model.predict(x)).grad);
}

void AttackNetTrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("attack net training: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("attack net training: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("attack net training: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("attack net training: momentum must be in [0,1)");
}

namespace {

Tensor net_input(const AttackNet& net, const Tensor& x, const Classifier* hint_model) {
  if (!net.spec().gradient_hint) return x;
  if (hint_model == nullptr) throw std::invalid_argument("attack net " + net.name() + " needs a hint model");
  return ops::concat_channels(x, gradient_hint(*hint_model, x));
}

}  // namespace

AttackNet train_attack_fcn(AttackNet net, std::span<const Classifier* const> targets,
                           std::span<const ImageRecord> data, const AttackNetTrainConfig& cfg,
                           const Classifier* hint_model) {
  cfg.validate();
  if (targets.empty()) throw std::invalid_argument("attack net training: no target models");
  if (data.empty()) throw std::invalid_argument("attack net training: empty dataset");
  for (double e : net.spec().epsilons) {
    const bool known = std::any_of(kArenaEpsilons.begin(), kArenaEpsilons.end(),
                                   [e](double a) { return std::abs(a - e) <= 1e-9; });
    if (!known) throw std::invalid_argument("attack net training: head epsilon " + std::to_string(e) +
                                            " is not in the arena set");
  }
  // precompute hint channels once; the hint model is frozen
  std::vector<Tensor> inputs;
  inputs.reserve(data.size());
  for (const auto& r : data) inputs.push_back(net_input(net, r.pixels, hint_model));

  detail::MomentumSgd opt(net.weights(), cfg.learning_rate, cfg.momentum);
  Rng shuffle_rng(derive_seed(cfg.seed, hash_name("shuffle")));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t heads = net.spec().epsilons.size();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto grads = detail::zeros_like(net.weights());
      for (std::size_t i = start; i < end; ++i) {
        const auto& rec = data[order[i]];
        const auto tr = net.forward(inputs[order[i]]);
        std::vector<Tensor> up;
        for (std::size_t h = 0; h < heads; ++h) {
          const Tensor z = rec.pixels + net.perturbation(tr, h);
          const Tensor adv = ops::clip01(z);
          Tensor g(z.shape());
          for (const auto* m : targets) g += m->loss_grad_input(adv, rec.true_label).grad;
          // ascent: minimise -J; clip passes gradient only inside [0,1]
          for (std::size_t k = 0; k < z.size(); ++k) g[k] = (z[k] >= 0.0 && z[k] <= 1.0) ? -g[k] : 0.0;
          up.push_back(std::move(g));
        }
        auto pg = net.backward(tr, up);
        for (std::size_t k = 0; k < pg.size(); ++k) grads[k] += pg[k];
      }
      opt.step(net.mutable_weights(), grads, 1.0 / static_cast<double>(end - start));
    }
  }
  for (const auto& w : net.weights())
    if (!all_finite(w)) throw std::runtime_error("attack net training diverged (non-finite weights)");
  return net;
}

Tensor apply_attack_fcn(const AttackNet& net, const Tensor& x, double epsilon, const Classifier* hint_model) {
  const std::size_t h = net.head_for(epsilon);
  const auto tr = net.forward(net_input(net, x, hint_model));
  return project_linf(ops::clip01(x + net.perturbation(tr, h)), x, epsilon);
}

}  // namespace advarena
