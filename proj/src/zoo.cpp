#include "advarena/zoo.hpp"

#include <cmath>

#include "advarena/attacks.hpp"
#include "advarena/rng.hpp"
#include "advarena/weights_io.hpp"

namespace advarena {

std::string to_string(AdvMode m) {
  switch (m) {
    case AdvMode::none:
      return "none";
    case AdvMode::self_fgsm:
      return "self_fgsm";
    case AdvMode::ensemble_fgsm:
      return "ensemble_fgsm";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must be in [0,1)");
  if (!(adversarial_fraction >= 0.0 && adversarial_fraction <= 1.0))
    throw std::invalid_argument("train: adversarial fraction must be in [0,1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("train: epsilon must be in [0,1]");
}

Classifier train(std::string name, const ModelSpec& spec, std::span<const ImageRecord> data, const TrainConfig& cfg,
                 std::span<const Classifier* const> sources) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.mode == AdvMode::ensemble_fgsm && sources.empty())
    throw std::invalid_argument("train: ensemble_fgsm needs at least one frozen source model");

  Classifier model = Classifier::build(std::move(name), spec, derive_seed(cfg.seed, hash_name("init")));
  Rng shuffle_rng(derive_seed(cfg.seed, hash_name("shuffle")));
  Rng source_rng(derive_seed(cfg.seed, hash_name("sources")));

  std::vector<Tensor> velocity;
  for (const auto& w : model.weights()) velocity.emplace_back(w.shape());

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t n = end - start;
      const auto n_adv = cfg.mode == AdvMode::none || epoch < cfg.clean_warmup_epochs
                             ? std::size_t{0}
                             : static_cast<std::size_t>(std::llround(cfg.adversarial_fraction * static_cast<double>(n)));
      const Classifier* source = nullptr;
      if (n_adv > 0) {
        source = cfg.mode == AdvMode::self_fgsm ? &model
                                                 : sources[static_cast<std::size_t>(source_rng.uniform_int(sources.size()))];
      }

      std::vector<Tensor> acc;
      for (const auto& w : model.weights()) acc.emplace_back(w.shape());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = data[order[start + i]];
        const Tensor x = i < n_adv ? fgsm(*source, rec.pixels, rec.true_label, cfg.epsilon) : rec.pixels;
        const Trace tr = model.forward(x);
        const auto ce = ops::softmax_cross_entropy(tr.logits(), rec.true_label);
        auto g = model.backward_params(tr, ce.grad);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
      }
      auto& weights = model.mutable_weights();
      const double scale = cfg.learning_rate / static_cast<double>(n);
      for (std::size_t k = 0; k < weights.size(); ++k) {
        velocity[k] *= cfg.momentum;
        axpy(-scale, acc[k], velocity[k]);
        weights[k] += velocity[k];
      }
    }
  }
  for (const auto& w : model.weights())
    if (!all_finite(w)) throw std::runtime_error("train: " + model.name() + " diverged (non-finite weights)");
  return model;
}

// ---- zoo -------------------------------------------------------------------------------------------

void ModelZoo::add(Classifier model) {
  const std::string name = model.name();
  models_.insert_or_assign(name, std::move(model));
}

const Classifier& ModelZoo::get(const std::string& name) const {
  auto it = models_.find(name);
  if (it == models_.end()) throw std::out_of_range("unknown model '" + name + "'");
  return it->second;
}

std::vector<const Classifier*> ModelZoo::get_all(const std::vector<std::string>& names) const {
  std::vector<const Classifier*> out;
  for (const auto& n : names) out.push_back(&get(n));
  return out;
}

std::vector<std::string> ModelZoo::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : models_) out.push_back(n);
  return out;
}

void ModelZoo::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [n, m] : models_) m.save(dir / (n + ".advw"));
}

ModelZoo ModelZoo::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("models directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".advw") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  ModelZoo zoo;
  for (const auto& f : files) {
    auto w = read_weights_file(f);
    if (w.spec_text.rfind("kind classifier", 0) == 0) zoo.add(Classifier::load(f));
  }
  return zoo;
}

ModelSpec logreg_spec() {
  ModelSpec s;
  s.layers = {DenseLayer{10}};
  return s;
}

ModelSpec mlp2_spec() {
  ModelSpec s;
  s.layers = {DenseLayer{64}, ReluLayer{}, DenseLayer{10}};
  return s;
}

ModelSpec cnn_a_spec() {
  ModelSpec s;
  s.layers = {ConvLayer{8, 4, 2, 1}, ReluLayer{}, ConvLayer{16, 4, 2, 1}, ReluLayer{}, DenseLayer{10}};
  return s;
}

ModelSpec cnn_b_spec() {
  ModelSpec s;
  s.layers = {ConvLayer{12, 6, 2, 2}, ReluLayer{}, ConvLayer{12, 4, 2, 1}, ReluLayer{},
              DenseLayer{32},         ReluLayer{}, DenseLayer{10}};
  return s;
}

ModelSpec holdout_cnn_spec() {
  ModelSpec s;
  s.layers = {ConvLayer{8, 3, 1, 1},  ReluLayer{}, ConvLayer{16, 4, 2, 1}, ReluLayer{},
              ConvLayer{16, 4, 2, 1}, ReluLayer{}, DenseLayer{10}};
  return s;
}

std::vector<ZooEntry> default_zoo_entries(std::uint64_t seed) {
  auto cfg = [seed](std::string_view name, std::size_t epochs, double lr) {
    TrainConfig c;
    c.seed = derive_seed(seed, hash_name(name));
    c.epochs = epochs;
    c.learning_rate = lr;
    return c;
  };
  std::vector<ZooEntry> e;
  e.push_back({"logreg", logreg_spec(), cfg("logreg", 16, 0.01), false});
  e.push_back({"mlp2", mlp2_spec(), cfg("mlp2", 16, 0.01), false});
  e.push_back({"cnn_a", cnn_a_spec(), cfg("cnn_a", 8, 0.02), false});
  e.push_back({"cnn_b", cnn_b_spec(), cfg("cnn_b", 8, 0.02), false});
  e.push_back({"holdout_cnn", holdout_cnn_spec(), cfg("holdout_cnn", 8, 0.02), false});

  ZooEntry adv{"cnn_a_adv", cnn_a_spec(), cfg("cnn_a_adv", 8, 0.02), true};
  adv.train.mode = AdvMode::self_fgsm;
  adv.train.clean_warmup_epochs = 2;  // self-FGSM from random init stalls at chance
  e.push_back(adv);

  ZooEntry ens{"cnn_a_ensadv", cnn_a_spec(), cfg("cnn_a_ensadv", 8, 0.02), true};
  ens.train.mode = AdvMode::ensemble_fgsm;
  ens.train.source_models = {"cnn_b", "mlp2"};
  ens.train.clean_warmup_epochs = 2;
  e.push_back(ens);
  return e;
}

bool is_adversarially_trained(const std::string& name) {
  return name.find("_adv") != std::string::npos || name.find("ensadv") != std::string::npos;
}

ModelZoo train_zoo(const std::vector<ZooEntry>& entries, std::span<const ImageRecord> data,
                   const ProgressFn& progress) {
  ModelZoo zoo;
  for (const auto& e : entries) {
    if (progress) progress(e.name);
    const auto sources = zoo.get_all(e.train.source_models);
    zoo.add(train(e.name, e.spec, data, e.train, sources));
  }
  return zoo;
}

ModelZoo load_or_train_zoo(const std::filesystem::path& dir, const std::vector<ZooEntry>& entries,
                           std::span<const ImageRecord> data, const ProgressFn& progress) {
  bool complete = std::filesystem::is_directory(dir);
  for (const auto& e : entries) complete = complete && std::filesystem::exists(dir / (e.name + ".advw"));
  if (complete) return ModelZoo::load(dir);
  ModelZoo zoo = train_zoo(entries, data, progress);
  zoo.save(dir);
  return zoo;
}

}  // namespace advarena
