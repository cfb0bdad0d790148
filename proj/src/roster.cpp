#include "advarena/roster.hpp"

#include <algorithm>
#include <fstream>
#include <memory>

#include "advarena/attacks.hpp"
#include "advarena/defenses.hpp"

namespace advarena {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); }

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(where + "." + key, "wrong type");
  }
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) fail(where + "." + key, "missing");
  if (!obj.at(key).is_string()) fail(where + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

const std::vector<std::string> kAttackMethods = {"identity",        "fgsm",         "bim",
                                                 "mim",             "augmented",    "dynamic_ensemble",
                                                 "attack_fcn",      "targeted_iterative", "targeted_mim"};
const std::vector<std::string> kDefenseMethods = {"direct", "median_ensemble", "bit_depth", "random_resize_pad",
                                                  "denoised"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

const std::vector<std::string>& attack_methods() { return kAttackMethods; }
const std::vector<std::string>& defense_methods() { return kDefenseMethods; }

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) fail("config", "expected an object");
  static const std::vector<std::string> known = {"dataset_dir", "models_dir", "output_dir", "split",  "seed",
                                                 "batch_size",  "budget_seconds", "workers", "submissions"};
  for (const auto& [k, v] : j.items())
    if (!contains(known, k)) fail(k, "unknown field");
  RunConfig c;
  c.dataset_dir = get_or<std::string>(j, "dataset_dir", c.dataset_dir.string(), "config");
  c.models_dir = get_or<std::string>(j, "models_dir", c.models_dir.string(), "config");
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir.string(), "config");
  c.split = get_or<std::string>(j, "split", c.split, "config");
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "config");
  c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size, "config");
  c.budget_seconds = get_or<double>(j, "budget_seconds", c.budget_seconds, "config");
  c.workers = get_or<std::size_t>(j, "workers", c.workers, "config");
  if (c.batch_size == 0) fail("batch_size", "must be >= 1");
  if (!(c.budget_seconds > 0.0)) fail("budget_seconds", "must be positive");
  if (c.workers == 0) fail("workers", "must be >= 1");

  if (j.contains("submissions")) {
    const auto& subs = j.at("submissions");
    if (!subs.is_array()) fail("submissions", "expected an array");
    for (std::size_t i = 0; i < subs.size(); ++i) {
      const std::string where = "submissions[" + std::to_string(i) + "]";
      const auto& s = subs[i];
      if (!s.is_object()) fail(where, "expected an object");
      for (const auto& [k, v] : s.items())
        if (!contains({"id", "kind", "method", "command", "params"}, k)) fail(where + "." + k, "unknown field");
      SubmissionSpec spec;
      spec.id = require_string(s, "id", where);
      if (spec.id.empty()) fail(where + ".id", "empty");
      try {
        spec.kind = submission_kind_from_string(require_string(s, "kind", where));
      } catch (const std::invalid_argument& e) {
        fail(where + ".kind", e.what());
      }
      spec.method = get_or<std::string>(s, "method", "", where);
      spec.command = get_or<std::string>(s, "command", "", where);
      if (spec.method.empty() == spec.command.empty()) fail(where, "exactly one of method or command is required");
      if (s.contains("params")) {
        if (!s.at("params").is_object()) fail(where + ".params", "expected an object");
        spec.params = s.at("params");
      }
      for (const auto& other : c.submissions)
        if (other.id == spec.id) fail(where + ".id", "duplicate id '" + spec.id + "'");
      c.submissions.push_back(std::move(spec));
    }
  }
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["dataset_dir"] = dataset_dir.string();
  j["models_dir"] = models_dir.string();
  j["output_dir"] = output_dir.string();
  j["split"] = split;
  j["seed"] = seed;
  j["batch_size"] = batch_size;
  j["budget_seconds"] = budget_seconds;
  j["workers"] = workers;
  j["submissions"] = json::array();
  for (const auto& s : submissions) {
    json e;
    e["id"] = s.id;
    e["kind"] = to_string(s.kind);
    if (!s.method.empty()) e["method"] = s.method;
    if (!s.command.empty()) e["command"] = s.command;
    if (!s.params.empty()) e["params"] = s.params;
    j["submissions"].push_back(e);
  }
  return j;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("--config", "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail("--config", std::string("malformed JSON: ") + e.what());
  }
  return from_json(j);
}

const SubmissionSpec& RunConfig::submission(const std::string& id) const {
  for (const auto& s : submissions)
    if (s.id == id) return s;
  fail("--id", "no submission '" + id + "' in the roster");
}

RunConfig default_run_config() {
  RunConfig c;
  const json surrogates = {"cnn_a", "cnn_b", "mlp2"};
  auto add = [&](std::string id, SubmissionKind kind, std::string method, json params) {
    c.submissions.push_back(SubmissionSpec{std::move(id), kind, std::move(method), "", std::move(params)});
  };
  using K = SubmissionKind;
  add("fgsm_cnn_a", K::nontargeted_attack, "fgsm", {{"model", "cnn_a"}});
  add("bim_ens", K::nontargeted_attack, "bim", {{"models", surrogates}, {"steps", 10}});
  add("mim_ens", K::nontargeted_attack, "mim", {{"models", surrogates}, {"steps", 10}, {"momentum", 1.0}});
  add("augmented_ens", K::nontargeted_attack, "augmented",
      {{"models", {"cnn_a", "cnn_b", "cnn_a_adv"}}, {"pseudo_model", "cnn_a"}, {"aug_samples", 2}});
  add("target_iter_loss", K::targeted_attack, "targeted_iterative",
      {{"models", surrogates}, {"steps", 10}, {"fusion", "loss_ensemble"}});
  add("target_mim", K::targeted_attack, "targeted_mim", {{"models", surrogates}, {"steps", 10}});

  add("direct_cnn_a", K::defense, "direct", {{"models", {"cnn_a"}}});
  add("direct_holdout", K::defense, "direct", {{"models", {"holdout_cnn"}}});
  add("adv_trained", K::defense, "direct", {{"models", {"cnn_a_adv"}}});
  add("median_adv_ens", K::defense, "median_ensemble", {{"models", {"cnn_a_adv", "cnn_a_ensadv"}}});
  add("bit_depth_cnn_b", K::defense, "bit_depth", {{"models", {"cnn_b"}}, {"bits", 3}});
  add("randomized_holdout", K::defense, "random_resize_pad", {{"models", {"holdout_cnn"}}, {"seed", 5}});
  add("denoised_lgd", K::defense, "denoised", {{"models", {"cnn_a"}}, {"denoiser", "lgd_cnn_a"}});
  return c;
}

Artifacts Artifacts::load(const fs::path& models_dir) {
  if (!fs::is_directory(models_dir)) fail("--models-dir", "directory not found: " + models_dir.string());
  Artifacts a;
  a.zoo = ModelZoo::load(models_dir);
  auto scan = [](const fs::path& dir) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".advw") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
  };
  for (const auto& f : scan(models_dir / "denoisers")) {
    auto d = Denoiser::load(f);
    a.denoisers.emplace(d.name(), std::move(d));
  }
  for (const auto& f : scan(models_dir / "attack_nets")) {
    auto n = AttackNet::load(f);
    a.attack_nets.emplace(n.name(), std::move(n));
  }
  return a;
}

namespace {

struct Resolver {
  const Artifacts& art;
  const json& params;
  std::string where;  // field path of params
  std::string entry;  // field path of the roster entry

  const Classifier* model(const std::string& key) const {
    const std::string name = require_string(params, key, where);
    if (!art.zoo.contains(name)) fail(where + "." + key, "unknown model '" + name + "'");
    return &art.zoo.get(name);
  }

  std::vector<const Classifier*> models(const std::string& key = "models") const {
    if (!params.contains(key)) fail(where + "." + key, "missing");
    const auto& arr = params.at(key);
    if (!arr.is_array() || arr.empty()) fail(where + "." + key, "expected a non-empty array of model names");
    std::vector<const Classifier*> out;
    for (const auto& v : arr) {
      if (!v.is_string()) fail(where + "." + key, "expected model names");
      const auto name = v.get<std::string>();
      if (!art.zoo.contains(name)) fail(where + "." + key, "unknown model '" + name + "'");
      out.push_back(&art.zoo.get(name));
    }
    return out;
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return get_or<T>(params, key, fallback, where);
  }

  Fusion fusion(Fusion fallback) const {
    if (!params.contains("fusion")) return fallback;
    try {
      return fusion_from_string(require_string(params, "fusion", where));
    } catch (const std::invalid_argument& e) {
      fail(where + ".fusion", e.what());
    }
  }

  void only(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : params.items())
      if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
        fail(where + "." + k, "unknown parameter");
  }
};

// Prediction of the attacker's own ensemble on the clean image; stands in for the unknown true label.
std::size_t pseudo_label(const EnsembleSpec& ens, const Tensor& x) {
  Tensor fused;
  for (const auto& m : ens.members) {
    Tensor p = m.model->probabilities(x);
    p *= m.weight;
    if (fused.size() == 0)
      fused = p;
    else
      fused += p;
  }
  return argmax(fused.data());
}

AttackFn build_attack(const SubmissionSpec& s, const Resolver& r) {
  const bool targeted = s.kind == SubmissionKind::targeted_attack;
  auto need = [&](bool want_targeted) {
    if (targeted != want_targeted)
      fail(r.entry + ".kind", "method " + s.method + " is a " + (want_targeted ? "targeted" : "non-targeted") +
                                  " attack");
  };
  const std::string& m = s.method;
  if (m == "identity") {
    r.only({});
    return [](const AttackInput& in) { return in.image; };
  }
  if (m == "fgsm") {
    need(false);
    r.only({"model"});
    const Classifier* model = r.model("model");
    return [model](const AttackInput& in) { return fgsm(*model, in.image, model->predict(in.image), in.epsilon); };
  }
  if (m == "bim" || m == "mim" || m == "targeted_iterative" || m == "targeted_mim") {
    const bool want_t = m.rfind("targeted", 0) == 0;
    need(want_t);
    r.only({"models", "steps", "momentum", "fusion", "random_start"});
    const auto models = r.models();
    const auto ens = EnsembleSpec::uniform(models, r.fusion(want_t ? Fusion::loss_ensemble : Fusion::logit_fuse));
    AttackConfig base;
    base.steps = r.get<std::size_t>("steps", m == "targeted_mim" ? 0 : 10);
    base.momentum = r.get<double>("momentum", 1.0);
    base.random_start = r.get<bool>("random_start", false);
    base.targeted = want_t;
    if (m != "targeted_mim" && base.steps == 0) fail(r.where + ".steps", "must be >= 1");
    return [ens, base, m](const AttackInput& in) {
      AttackConfig cfg = base;
      cfg.epsilon = in.epsilon;
      cfg.seed = in.seed;
      if (m == "targeted_mim" && cfg.steps == 0) cfg.steps = default_targeted_iterations(in.epsilon);
      if (m == "bim") return iterative(ens, in.image, pseudo_label(ens, in.image), cfg);
      if (m == "mim") return mim_nontargeted(ens, in.image, pseudo_label(ens, in.image), cfg);
      if (!in.target) throw std::invalid_argument("targeted attack called without a target");
      if (m == "targeted_iterative") return iterative(ens, in.image, *in.target, cfg);
      return mim_targeted(ens, in.image, *in.target, cfg);
    };
  }
  if (m == "augmented") {
    need(false);
    r.only({"models", "pseudo_model", "aug_samples", "warp_spread"});
    const auto models = r.models();
    const Classifier* pseudo = r.model("pseudo_model");
    std::shared_ptr<bool[]> adv(new bool[models.size()]);
    for (std::size_t i = 0; i < models.size(); ++i) adv[i] = is_adversarially_trained(models[i]->name());
    AttackConfig base;
    base.aug_samples = r.get<std::size_t>("aug_samples", 4);
    base.warp_spread = r.get<double>("warp_spread", 0.05);
    return [models, pseudo, adv, base](const AttackInput& in) {
      AttackConfig cfg = base;
      cfg.epsilon = in.epsilon;
      cfg.seed = in.seed;
      apply_default_augmented_schedule(cfg, std::span<const bool>(adv.get(), models.size()));
      return augmented_ensemble_attack(models, *pseudo, in.image, cfg);
    };
  }
  if (m == "dynamic_ensemble") {
    r.only({"models", "steps", "gate_threshold", "gate_ceiling"});
    const auto models = r.models();
    AttackConfig base;
    base.steps = r.get<std::size_t>("steps", 10);
    base.targeted = targeted;
    base.gate_threshold = r.get<double>("gate_threshold", base.gate_threshold);
    if (r.params.contains("gate_ceiling")) base.gate_ceiling = r.get<double>("gate_ceiling", 0.0);
    const auto ens = EnsembleSpec::uniform(models, Fusion::loss_ensemble);
    return [models, ens, base](const AttackInput& in) {
      AttackConfig cfg = base;
      cfg.epsilon = in.epsilon;
      cfg.seed = in.seed;
      const std::size_t label = cfg.targeted ? in.target.value() : pseudo_label(ens, in.image);
      return dynamic_iterative_ensemble(models, in.image, label, cfg);
    };
  }
  if (m == "attack_fcn") {
    need(false);
    r.only({"net", "hint_model"});
    const std::string name = require_string(r.params, "net", r.where);
    auto it = r.art.attack_nets.find(name);
    if (it == r.art.attack_nets.end()) fail(r.where + ".net", "unknown attack net '" + name + "'");
    const AttackNet* net = &it->second;
    const Classifier* hint = nullptr;
    if (net->spec().gradient_hint) hint = r.model("hint_model");
    for (double e : kArenaEpsilons) try {
        (void)net->head_for(e);
      } catch (const std::exception&) {
        fail(r.where + ".net", "attack net '" + name + "' lacks a head for an arena epsilon");
      }
    return [net, hint](const AttackInput& in) { return apply_attack_fcn(*net, in.image, in.epsilon, hint); };
  }
  fail(r.entry + ".method", "unknown attack method '" + m + "'");
}

DefenseFn build_defense(const Resolver& r, const std::string& method) {
  r.only({"models", "bits", "resize_min", "resize_max", "pad_to", "n_patterns", "flip_prob", "denoiser", "seed"});
  auto def = std::make_shared<Defense>();
  try {
    def->config.kind = defense_kind_from_string(method);
  } catch (const std::invalid_argument&) {
    fail(r.entry + ".method", "unknown defense method '" + method + "'");
  }
  def->models = r.models();
  for (const auto* m : def->models) def->config.members.push_back(m->name());
  auto& c = def->config;
  c.bits = r.get<unsigned>("bits", c.bits);
  c.resize_min = r.get<std::size_t>("resize_min", c.resize_min);
  c.resize_max = r.get<std::size_t>("resize_max", c.resize_max);
  c.pad_to = r.get<std::size_t>("pad_to", c.pad_to);
  c.n_patterns = r.get<std::size_t>("n_patterns", c.n_patterns);
  c.flip_prob = r.get<double>("flip_prob", c.flip_prob);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  if (c.kind == DefenseKind::denoised) {
    c.denoiser = require_string(r.params, "denoiser", r.where);
    auto it = r.art.denoisers.find(c.denoiser);
    if (it == r.art.denoisers.end()) fail(r.where + ".denoiser", "unknown denoiser '" + c.denoiser + "'");
    def->denoiser = &it->second;
  }
  try {
    def->validate();
  } catch (const std::invalid_argument& e) {
    fail(r.where + ".params", e.what());
  }
  return [def](const Tensor& x, std::uint64_t seed) { return static_cast<long long>(def->classify(x, seed)); };
}

}  // namespace

std::vector<Submission> build_submissions(const RunConfig& cfg, const Artifacts& artifacts) {
  std::vector<Submission> out;
  for (std::size_t i = 0; i < cfg.submissions.size(); ++i) {
    const auto& s = cfg.submissions[i];
    Submission sub;
    sub.id = s.id;
    sub.kind = s.kind;
    sub.command = s.command;
    if (s.command.empty()) {
      const std::string entry = "submissions[" + std::to_string(i) + "]";
      const Resolver r{artifacts, s.params, entry + ".params", entry};
      if (is_attack(s.kind)) {
        if (!contains(kAttackMethods, s.method)) fail(entry + ".method", "unknown attack method '" + s.method + "'");
        sub.attack = build_attack(s, r);
      } else {
        if (!contains(kDefenseMethods, s.method))
          fail(entry + ".method", "unknown defense method '" + s.method + "'");
        sub.defense = build_defense(r, s.method);
      }
    }
    out.push_back(std::move(sub));
  }
  return out;
}

}  // namespace advarena
