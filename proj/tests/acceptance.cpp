// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.
// Trains (or loads the cached) default zoo on first use; expect several minutes on one core.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "advarena/arena.hpp"
#include "advarena/attack_net.hpp"
#include "advarena/attacks.hpp"
#include "advarena/defenses.hpp"
#include "advarena/denoiser.hpp"
#include "advarena/process.hpp"
#include "advarena/weights_io.hpp"
#include "checks.hpp"
#include "cli.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace advarena;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << "advarena " << args.front() << " failed: " << err.str();
  return code;
}

double fooling_rate(const Classifier& victim, const std::vector<Tensor>& adv, const DatasetSplit& split) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) n += victim.predict(adv[i]) != split.records[i].true_label;
  return static_cast<double>(n) / static_cast<double>(adv.size());
}

double accuracy_of(const std::function<std::size_t(const Tensor&, std::size_t)>& f, const std::vector<Tensor>& xs,
                   const DatasetSplit& split) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) n += f(xs[i], i) == split.records[i].true_label;
  return static_cast<double>(n) / static_cast<double>(xs.size());
}

std::vector<Tensor> clean_images(const DatasetSplit& s) {
  std::vector<Tensor> out;
  for (const auto& r : s.records) out.push_back(r.pixels);
  return out;
}

// Held-out splits shared by the transfer experiments.
const std::vector<DatasetSplit>& transfer_splits() {
  static const std::vector<DatasetSplit> s = {generate(10, 20, 32, 101, "dev"), generate(10, 20, 32, 102, "dev"),
                                              generate(10, 20, 32, 103, "dev")};
  return s;
}

Verdict c1_kernels() {
  const auto t0 = Clock::now();
  const KernelCheckResult r[] = {check_conv(100, 1),   check_dense(100, 2),  check_relu(100, 3),
                                 check_cross_entropy(100, 4), check_resize(100, 5), check_warp(100, 6),
                                 check_pad(100, 7),   check_model_input_grad(10, 8)};
  double fd = 0, adj = 0;
  for (const auto& x : r) {
    fd = std::max(fd, x.fd_rel_error);
    adj = std::max(adj, x.adjoint_gap);
  }
  const double t = since(t0);
  Verdict v;
  v.require(fd <= 1e-5, "max fd rel error " + fmt("%.2e", fd));
  v.require(adj <= 1e-10, "max adjoint gap " + fmt("%.2e", adj));
  v.require(t < 60.0, "time " + fmt("%.1fs", t));
  return v;
}

Verdict c2_scoring() {
  Rng rng(2024);
  std::size_t mismatches = 0, with_null = 0, with_missing = 0, crashed_zero = 0;
  for (int t = 0; t < 100; ++t) {
    auto m = random_matrix(rng, 5, 5, 20, true);
    if (t % 4 == 0)  // attacker that crashed before writing anything
      for (std::size_t k = 0; k < m.n_images(); ++k) m.attack_present[0][k] = false;
    with_null += std::count(m.labels.begin(), m.labels.end(), kNullLabel) > 0;
    bool missing = false;
    for (const auto& row : m.attack_present) missing = missing || std::count(row.begin(), row.end(), false) > 0;
    with_missing += missing;
    const auto sb = compute_scores(m);
    const auto worst = worst_case_scores(m);
    const auto o = brute_force(m);
    for (std::size_t i = 0; i < o.raw.size(); ++i) {
      if (sb.rows[i].raw != o.raw[i]) ++mismatches;
      if (std::abs(sb.rows[i].normalized - o.normalized[i]) > 1e-12) ++mismatches;
      if (std::abs(worst[i] - o.worst[i]) > 1e-12) ++mismatches;
    }
    if (t % 4 == 0) crashed_zero += sb.rows[0].raw == 0;
  }
  Verdict v;
  v.require(mismatches == 0, std::to_string(mismatches) + " mismatches over 100 matrices (5x5x20)");
  v.require(with_null > 0 && with_missing > 0,
            std::to_string(with_null) + " with null labels, " + std::to_string(with_missing) + " with missing images");
  v.require(crashed_zero == 25, "crashed attackers scored zero in " + std::to_string(crashed_zero) + "/25");
  return v;
}

Verdict c3_collapse(const Fixture& f) {
  const auto& a = f.zoo.get("cnn_a");
  const auto ens3 = f.zoo.get_all({"cnn_a", "cnn_b", "mlp2"});
  const double eps = 16.0 / 255.0;
  std::size_t bad_mim = 0, bad_iter = 0, bad_dyn = 0, bad_rand = 0, bad_den = 0, n = 0;
  DefenseConfig degenerate;
  degenerate.kind = DefenseKind::random_resize_pad;
  degenerate.resize_min = 32;
  degenerate.resize_max = 33;
  degenerate.pad_to = 32;
  degenerate.n_patterns = 1;
  degenerate.flip_prob = 0.0;
  const auto den = Denoiser::build("zero", DenoiserSpec{}, 1);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& r = f.dev.records[i];
    const Tensor ref = fgsm(a, r.pixels, r.true_label, eps);
    AttackConfig one;
    one.epsilon = eps;
    one.steps = 1;
    one.momentum = 0.0;
    bad_mim += mim_nontargeted(EnsembleSpec::single(a), r.pixels, r.true_label, one) != ref;
    AttackConfig full = one;
    full.step_size = eps;
    bad_iter += iterative(EnsembleSpec::single(a), r.pixels, r.true_label, full) != ref;
    AttackConfig gated;
    gated.epsilon = eps;
    gated.steps = 5;
    gated.targeted = true;
    gated.gate_threshold = 0.0;
    bad_dyn += dynamic_iterative_ensemble(ens3, r.pixels, r.target_label, gated) !=
               iterative(EnsembleSpec::uniform(ens3, Fusion::loss_ensemble), r.pixels, r.target_label, gated);
    const auto pats = sample_patterns(degenerate);
    bad_rand += apply_pattern(r.pixels, pats[0], 32) != r.pixels ||
                defend_random_resize_pad(a, r.pixels, degenerate) != a.predict(r.pixels);
    bad_den += denoise(den, r.pixels) != r.pixels;
    ++n;
  }
  Verdict v;
  v.require(bad_mim == 0, "mim(mu=0,T=1)=fgsm " + std::to_string(n - bad_mim) + "/" + std::to_string(n));
  v.require(bad_iter == 0, "iterative(T=1)=fgsm " + std::to_string(n - bad_iter) + "/" + std::to_string(n));
  v.require(bad_dyn == 0, "gated-off dynamic=loss ensemble " + std::to_string(n - bad_dyn) + "/" + std::to_string(n));
  v.require(bad_rand == 0, "degenerate randomization=direct " + std::to_string(n - bad_rand) + "/" + std::to_string(n));
  v.require(bad_den == 0, "zero denoiser=identity " + std::to_string(n - bad_den) + "/" + std::to_string(n));
  return v;
}

ModelSpec tiny_cnn() {
  ModelSpec s;
  s.channels = 3;
  s.height = 8;
  s.width = 8;
  s.classes = 4;
  s.layers = {ConvLayer{4, 4, 2, 1}, ReluLayer{}, DenseLayer{8}, ReluLayer{}, DenseLayer{4}};
  return s;
}

Verdict c4_ball() {
  const auto m1 = Classifier::build("t1", tiny_cnn(), 1);
  const auto m2 = Classifier::build("t2", tiny_cnn(), 2);
  ModelSpec lin = tiny_cnn();
  lin.layers = {DenseLayer{4}};
  const auto m3 = Classifier::build("t3", lin, 3);
  const std::vector<const Classifier*> models = {&m1, &m2, &m3};
  AttackNetSpec ns;
  ns.height = 8;
  ns.width = 8;
  ns.features = 4;
  ns.coarse_features = 4;
  ns.epsilons = {kArenaEpsilons.begin(), kArenaEpsilons.end()};
  auto net = AttackNet::build("n", ns, 4);
  Rng rng(77);
  for (auto& w : net.mutable_weights())
    for (auto& x : w.data()) x = rng.uniform(-2.0, 2.0);

  const double ulp = std::numeric_limits<double>::epsilon();
  std::size_t runs = 0, violations = 0;
  double worst_excess = -1.0;
  for (int t = 0; runs < 10000; ++t) {
    const Tensor x = random_image(3, 8, 8, rng);
    const bool arena_eps = rng.uniform() < 0.5;
    const double eps = arena_eps ? kArenaEpsilons[rng.uniform_int(4)] : rng.uniform(0.0, 0.2);
    const std::size_t y = rng.uniform_int(4);
    AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.steps = 1 + rng.uniform_int(4);
    if (rng.uniform() < 0.5) cfg.step_size = rng.uniform(0.001, 0.3);
    cfg.random_start = rng.uniform() < 0.5;
    cfg.momentum = rng.uniform(0.0, 1.0);
    cfg.seed = rng.next();
    cfg.aug_samples = rng.uniform_int(3);
    const auto ens = EnsembleSpec::uniform(models, static_cast<Fusion>(rng.uniform_int(3)));
    std::vector<Tensor> outs;
    switch (t % 8) {
      case 0: outs.push_back(fgsm(*models[rng.uniform_int(3)], x, y, eps)); break;
      case 1: outs.push_back(iterative(ens, x, y, cfg)); break;
      case 2: cfg.targeted = true; outs.push_back(iterative(ens, x, y, cfg)); break;
      case 3: outs.push_back(mim_nontargeted(ens, x, y, cfg)); break;
      case 4: outs.push_back(mim_targeted(ens, x, y, cfg)); break;
      case 5: cfg.targeted = rng.uniform() < 0.5; outs.push_back(dynamic_iterative_ensemble(models, x, y, cfg)); break;
      case 6: outs.push_back(augmented_ensemble_attack(models, *models[rng.uniform_int(3)], x, cfg)); break;
      case 7:
        if (arena_eps) outs.push_back(apply_attack_fcn(net, x, eps));
        else outs.push_back(project_linf(random_tensor(x.shape(), rng, -1.0, 2.0), x, eps));
        break;
    }
    for (const auto& adv : outs) {
      ++runs;
      bool ok = true;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = std::abs(adv[i] - x[i]);
        worst_excess = std::max(worst_excess, d - eps);
        if (!(adv[i] >= 0.0 && adv[i] <= 1.0) || d > eps + ulp) ok = false;
      }
      violations += !ok;
    }
  }
  Verdict v;
  v.require(violations == 0, std::to_string(violations) + " violations in " + std::to_string(runs) + " invocations");
  v.detail += ", max excess " + fmt("%.1e", worst_excess);
  return v;
}

// The targeted budget is 24/255: at 16/255 about 14% of (image, target) pairs on the fixture data stay out of
// reach of cnn_a even with 100 steps, so that rate is printed but not asserted.
Verdict c5_whitebox(const Fixture& f) {
  const auto t0 = Clock::now();
  const auto& a = f.zoo.get("cnn_a");
  const double eps = 16.0 / 255.0;
  auto hit_rate = [&](double e) {
    AttackConfig cfg;
    cfg.epsilon = e;
    cfg.steps = 20;
    cfg.targeted = true;
    std::size_t hits = 0;
    for (const auto& r : f.dev.records)
      hits += a.predict(iterative(EnsembleSpec::single(a), r.pixels, r.target_label, cfg)) == r.target_label;
    return static_cast<double>(hits) / static_cast<double>(f.dev.size());
  };
  std::size_t clean = 0, after = 0;
  for (const auto& r : f.dev.records) {
    clean += a.predict(r.pixels) == r.true_label;
    after += a.predict(fgsm(a, r.pixels, r.true_label, eps)) == r.true_label;
  }
  const double n = static_cast<double>(f.dev.size());
  const double drop = (static_cast<double>(clean) - static_cast<double>(after)) / n;
  const double hit16 = hit_rate(eps), hit24 = hit_rate(24.0 / 255.0);
  const double t = since(t0);
  Verdict v;
  v.require(drop >= 0.5, "fgsm drop " + fmt("%.2f", static_cast<double>(clean) / n) + " -> " +
                             fmt("%.2f", static_cast<double>(after) / n));
  v.require(hit24 >= 0.9, "targeted T=20 hit rate " + fmt("%.2f", hit24) + " at 24/255 (" + fmt("%.2f", hit16) +
                              " at 16/255)");
  v.require(t < 120.0, "time " + fmt("%.1fs", t));
  return v;
}

Verdict c6_momentum(const Fixture& f) {
  const auto src = f.zoo.get_all({"cnn_a", "cnn_b", "mlp2"});
  const auto& hold = f.zoo.get("holdout_cnn");
  const auto ens = EnsembleSpec::uniform(src, Fusion::logit_fuse);
  AttackConfig cfg;
  cfg.epsilon = 16.0 / 255.0;
  cfg.steps = 10;
  cfg.momentum = 1.0;
  double mim = 0, it = 0;
  std::string per_seed;
  for (const auto& s : transfer_splits()) {
    std::vector<Tensor> am, ai;
    for (const auto& r : s.records) {
      am.push_back(mim_nontargeted(ens, r.pixels, r.true_label, cfg));
      ai.push_back(iterative(ens, r.pixels, r.true_label, cfg));
    }
    const double fm = fooling_rate(hold, am, s), fi = fooling_rate(hold, ai, s);
    mim += fm / 3.0;
    it += fi / 3.0;
    per_seed += " " + fmt("%.3f", fm) + "/" + fmt("%.3f", fi);
  }
  Verdict v;
  v.require(mim >= it, "holdout fooling mim " + fmt("%.3f", mim) + " vs iterative " + fmt("%.3f", it) +
                           " (per seed" + per_seed + ")");
  return v;
}

Verdict c7_jensen(const Fixture& f) {
  const auto src = f.zoo.get_all({"cnn_a", "cnn_b", "mlp2"});
  Rng rng(7);
  double worst_gap = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 1000; ++t) {
    EnsembleSpec prob = EnsembleSpec::uniform(src, Fusion::prob_ensemble);
    double w[3], tot = 0;
    for (double& x : w) tot += x = rng.uniform(0.01, 1.0);
    for (int k = 0; k < 3; ++k) prob.members[k].weight = w[k] / tot;
    EnsembleSpec loss = prob;
    loss.fusion = Fusion::loss_ensemble;
    const Tensor x = random_image(3, 32, 32, rng);
    const std::size_t y = rng.uniform_int(10);
    worst_gap = std::min(worst_gap, ensemble_loss_grad(loss, x, y).loss - ensemble_loss_grad(prob, x, y).loss);
  }

  AttackConfig cfg;
  cfg.epsilon = 16.0 / 255.0;
  cfg.steps = 10;
  cfg.targeted = true;
  double hl = 0, hp = 0;
  for (std::uint64_t seed : {201, 202, 203}) {
    const auto s = generate(10, 10, 32, seed, "dev");
    const auto el = EnsembleSpec::uniform(src, Fusion::loss_ensemble), ep = EnsembleSpec::uniform(src, Fusion::prob_ensemble);
    std::size_t l = 0, p = 0;
    for (const auto& r : s.records) {
      const Tensor al = iterative(el, r.pixels, r.target_label, cfg), ap = iterative(ep, r.pixels, r.target_label, cfg);
      for (const auto* m : src) {
        l += m->predict(al) == r.target_label;
        p += m->predict(ap) == r.target_label;
      }
    }
    const double n = static_cast<double>(s.size() * src.size());
    hl += static_cast<double>(l) / n / 3.0;
    hp += static_cast<double>(p) / n / 3.0;
  }
  Verdict v;
  v.require(worst_gap >= -1e-9, "min(loss - prob) over 1000 inputs " + fmt("%.2e", worst_gap));
  v.require(hl >= hp - 0.02, "targeted hit rate loss " + fmt("%.3f", hl) + " vs prob " + fmt("%.3f", hp));
  return v;
}

Verdict c8_randomization(const Fixture& f) {
  const auto& base = f.zoo.get("holdout_cnn");
  AttackConfig cfg;
  cfg.epsilon = 16.0 / 255.0;
  cfg.steps = 10;
  double cb = 0, cr = 0, fb = 0, fr = 0;
  std::uint64_t seed = 0;
  for (const auto& s : transfer_splits()) {
    ++seed;
    DefenseConfig dc;
    dc.kind = DefenseKind::random_resize_pad;
    auto randomized = [&](const Tensor& x, std::size_t i) {
      DefenseConfig c = dc;
      c.seed = derive_seed(seed, i);
      return defend_random_resize_pad(base, x, c);
    };
    auto bare = [&](const Tensor& x, std::size_t) { return base.predict(x); };
    std::vector<Tensor> adv;
    for (const auto& r : s.records) adv.push_back(iterative(EnsembleSpec::single(base), r.pixels, r.true_label, cfg));
    const auto clean = clean_images(s);
    cb += accuracy_of(bare, clean, s) / 3.0;
    cr += accuracy_of(randomized, clean, s) / 3.0;
    fb += (1.0 - accuracy_of(bare, adv, s)) / 3.0;
    fr += (1.0 - accuracy_of(randomized, adv, s)) / 3.0;
  }
  Verdict v;
  v.require(std::abs(cb - cr) <= 0.05, "clean accuracy bare " + fmt("%.3f", cb) + " randomized " + fmt("%.3f", cr));
  v.require(fr <= fb - 0.10, "fooling rate bare " + fmt("%.3f", fb) + " randomized " + fmt("%.3f", fr));
  return v;
}

Verdict c9_median(const Fixture& f) {
  const auto attackers = f.zoo.get_all({"cnn_a", "cnn_b", "mlp2", "cnn_a_adv", "cnn_a_ensadv"});
  const auto outsiders = f.zoo.get_all({"cnn_a", "cnn_b", "mlp2"});
  const auto members = f.zoo.get_all({"cnn_a_adv", "cnn_a_ensadv"});
  auto unfiltered = [&](const Tensor& x) {
    Tensor p({10});
    for (const auto* m : members) p += m->probabilities(x);
    return argmax(p.data());
  };
  const auto& s = transfer_splits().front();
  std::vector<double> filtered_rate;
  double unfiltered16 = 0, outsider_f = 0, outsider_u = 0;
  for (double e : {16.0, 8.0, 4.0, 2.0}) {
    AttackConfig cfg;
    cfg.epsilon = e / 255.0;
    cfg.steps = 10;
    const auto ens = EnsembleSpec::uniform(attackers, Fusion::logit_fuse);
    std::size_t mf = 0, mu = 0;
    for (const auto& r : s.records) {
      const Tensor a = mim_nontargeted(ens, r.pixels, r.true_label, cfg);
      mf += defend_median_ensemble(members, a) != r.true_label;
      mu += unfiltered(a) != r.true_label;
    }
    filtered_rate.push_back(static_cast<double>(mf) / static_cast<double>(s.size()));
    if (e == 16.0) {
      unfiltered16 = static_cast<double>(mu) / static_cast<double>(s.size());
      const auto ens_out = EnsembleSpec::uniform(outsiders, Fusion::logit_fuse);
      std::size_t of = 0, ou = 0;
      for (const auto& r : s.records) {
        const Tensor a = mim_nontargeted(ens_out, r.pixels, r.true_label, cfg);
        of += defend_median_ensemble(members, a) != r.true_label;
        ou += unfiltered(a) != r.true_label;
      }
      outsider_f = static_cast<double>(of) / static_cast<double>(s.size());
      outsider_u = static_cast<double>(ou) / static_cast<double>(s.size());
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < filtered_rate.size(); ++i) monotone = monotone && filtered_rate[i] <= filtered_rate[i - 1];
  Verdict v;
  v.require(filtered_rate[0] < unfiltered16,
            "eps 16 misclassified filtered " + fmt("%.3f", filtered_rate[0]) + " vs unfiltered " + fmt("%.3f", unfiltered16));
  v.require(monotone, "filtered over eps 16/8/4/2: " + fmt("%.3f", filtered_rate[0]) + " " +
                          fmt("%.3f", filtered_rate[1]) + " " + fmt("%.3f", filtered_rate[2]) + " " +
                          fmt("%.3f", filtered_rate[3]));
  v.detail += "; info: normal-model-only attacker filtered " + fmt("%.3f", outsider_f) + " unfiltered " +
              fmt("%.3f", outsider_u);
  return v;
}

// On-disk copy of the fixture data and zoo that the command-line tool can use.
fs::path arena_cache(const Fixture& f) {
  const fs::path root = fs::path(ADVARENA_TEST_CACHE) / "arena";
  if (!fs::exists(root / "data" / "dev" / "labels.csv")) {
    save_split(f.train, root / "data" / "train");
    save_split(f.dev, root / "data" / "dev");
  }
  fs::create_directories(root / "models");
  for (const auto& name : f.zoo.names())
    if (!fs::exists(root / "models" / (name + ".advw"))) f.zoo.get(name).save(root / "models" / (name + ".advw"));
  return root;
}

Verdict c10_denoiser(const Fixture& f) {
  const auto root = arena_cache(f);
  const auto guide_path = root / "models" / "cnn_a.advw";
  const auto before = read_bytes(guide_path);
  const int code = run_cli({"train-denoiser", "--dataset-dir", (root / "data").string(), "--models-dir",
                            (root / "models").string(), "--output-dir", (root / "models").string()});
  Verdict v;
  v.require(code == 0, "train-denoiser exit " + std::to_string(code));
  if (code != 0) return v;
  v.require(read_bytes(guide_path) == before, "guide file unchanged");
  const auto den = Denoiser::load(root / "models" / "denoisers" / "lgd_cnn_a.advw");
  const auto guide = Classifier::load(guide_path);
  v.require(guide.weights_hash() == f.zoo.get("cnn_a").weights_hash(), "guide weights hash unchanged");

  const auto src = f.zoo.get_all({"cnn_a", "cnn_b", "mlp2"});
  const auto ens = EnsembleSpec::uniform(src, Fusion::logit_fuse);
  AttackConfig cfg;
  cfg.epsilon = 16.0 / 255.0;
  cfg.steps = 10;
  std::vector<Tensor> adv;
  for (const auto& r : f.dev.records) adv.push_back(mim_nontargeted(ens, r.pixels, r.true_label, cfg));
  const double plain = accuracy_of([&](const Tensor& x, std::size_t) { return guide.predict(x); }, adv, f.dev);
  const double denoised =
      accuracy_of([&](const Tensor& x, std::size_t) { return guide.predict(denoise(den, x)); }, adv, f.dev);
  v.require(denoised >= plain + 0.10,
            "guide accuracy on held-out MIM images " + fmt("%.2f", plain) + " -> " + fmt("%.2f", denoised));
  return v;
}

Verdict c11_harness(const Fixture& f) {
  Verdict v;
  const std::string stub = shell_quote(ADVARENA_STUB);
  const auto small = generate(4, 25, 8, 9, "dev");

  // crashing defense is dropped from D
  {
    std::vector<Submission> subs(3);
    subs[0].id = "ident";
    subs[0].kind = SubmissionKind::nontargeted_attack;
    subs[0].attack = [](const AttackInput& in) { return in.image; };
    subs[1].id = "const";
    subs[1].command = stub + " const 1";
    subs[2].id = "crashy";
    subs[2].command = stub + " crash 7";
    RoundConfig rc;
    rc.batch_size = 25;
    rc.work_dir = temp_dir("acc_crash");
    const auto r = run_round(subs, small, rc);
    v.require(!r.scoreboard.row("crashy").eligible && r.scoreboard.row("const").eligible,
              "crashing defense excluded from D");
  }
  // hung attack: credit only for the 40 images it wrote
  {
    Submission hang;
    hang.id = "hang";
    hang.kind = SubmissionKind::nontargeted_attack;
    hang.command = stub + " hang 40";
    const auto res = run_attack_on_batch(hang, small.records, 8.0 / 255.0, 2.0, 1, temp_dir("acc_hang"));
    OutcomeMatrix m;
    for (const auto& r : small.records) {
      m.image_ids.push_back(r.id);
      m.true_labels.push_back(r.true_label);
      m.target_labels.push_back(r.target_label);
    }
    m.attack_ids = {"hang"};
    m.attack_kinds = {SubmissionKind::nontargeted_attack};
    m.defense_ids = {"always_wrong"};
    m.resize();
    for (std::size_t k = 0; k < m.n_images(); ++k) {
      m.attack_present[0][k] = res.images[k].has_value();
      m.label(0, 0, k) = static_cast<int>((m.true_labels[k] + 1) % 4);
    }
    const auto raw = compute_scores(m).row("hang").raw;
    v.require(res.report.status == CellStatus::timeout && res.report.completed == 40 && raw == 40,
              "timed-out attack credited " + std::to_string(raw) + "/100 after writing " +
                  std::to_string(res.report.completed));
  }
  // full default round, twice
  {
    const auto root = arena_cache(f);
    const auto out = temp_dir("acc_round");
    std::vector<std::string> args = {"run-round", "--dataset-dir", (root / "data").string(), "--models-dir",
                                     (root / "models").string()};
    auto a1 = args, a2 = args;
    a1.insert(a1.end(), {"--output-dir", (out / "r1").string()});
    a2.insert(a2.end(), {"--output-dir", (out / "r2").string()});
    const auto t0 = Clock::now();
    const int c1 = run_cli(a1);
    const double t = since(t0);
    const int c2 = run_cli(a2);
    const auto s1 = slurp(out / "r1" / "scoreboard.csv");
    v.require(c1 == 0 && c2 == 0 && !s1.empty() && s1 == slurp(out / "r2" / "scoreboard.csv"),
              "repeat rounds byte-identical");
    const auto lines = static_cast<std::size_t>(std::count(s1.begin(), s1.end(), '\n'));
    v.require(t < 600.0, "default round (" + std::to_string(f.dev.size()) + " images, " +
                             std::to_string(lines > 0 ? lines - 1 : 0) + " submissions) " + fmt("%.0fs", t));
  }
  return v;
}

}  // namespace

int main() {
  const auto& f = fixture();
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all = {
      {"1 kernel correctness", [] { return c1_kernels(); }},
      {"2 scoring oracle", [] { return c2_scoring(); }},
      {"3 degenerate collapses", [&] { return c3_collapse(f); }},
      {"4 epsilon-ball safety", [] { return c4_ball(); }},
      {"5 white-box potency", [&] { return c5_whitebox(f); }},
      {"6 momentum transfer", [&] { return c6_momentum(f); }},
      {"7 ensemble ordering", [&] { return c7_jensen(f); }},
      {"8 randomization defense", [&] { return c8_randomization(f); }},
      {"9 median-filter defense", [&] { return c9_median(f); }},
      {"10 guided denoiser", [&] { return c10_denoiser(f); }},
      {"11 harness semantics", [&] { return c11_harness(f); }},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("threw: ") + e.what();
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << c.name << " (" << fmt("%.1fs", since(t0)) << "): " << v.detail
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
