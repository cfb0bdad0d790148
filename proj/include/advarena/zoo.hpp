#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "advarena/dataset.hpp"
#include "advarena/model.hpp"

namespace advarena {

enum class AdvMode { none, self_fgsm, ensemble_fgsm };

std::string to_string(AdvMode m);

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  AdvMode mode = AdvMode::none;
  std::vector<std::string> source_models;  // ensemble_fgsm only
  double adversarial_fraction = 0.5;
  double epsilon = 8.0 / 255.0;
  std::size_t clean_warmup_epochs = 0;  // leading epochs trained without adversarial examples

  void validate() const;
};

/// Mini-batch SGD with momentum. In adversarial modes the first round(fraction * batch) examples of every
/// shuffled mini-batch are replaced by FGSM examples: against the model being trained (self_fgsm) or against
/// one frozen source model drawn per batch (ensemble_fgsm).
Classifier train(std::string name, const ModelSpec& spec, std::span<const ImageRecord> data, const TrainConfig& cfg,
                 std::span<const Classifier* const> sources = {});

/// Name -> classifier store.
class ModelZoo {
 public:
  void add(Classifier model);
  bool contains(const std::string& name) const { return models_.count(name) != 0; }
  /// Throws std::out_of_range naming the missing model.
  const Classifier& get(const std::string& name) const;
  std::vector<const Classifier*> get_all(const std::vector<std::string>& names) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return models_.size(); }

  /// Writes <dir>/<name>.advw for every model.
  void save(const std::filesystem::path& dir) const;
  /// Loads every *.advw file in dir.
  static ModelZoo load(const std::filesystem::path& dir);

 private:
  std::map<std::string, Classifier> models_;
};

struct ZooEntry {
  std::string name;
  ModelSpec spec;
  TrainConfig train;
  bool adversarially_trained = false;
};

ModelSpec logreg_spec();
ModelSpec mlp2_spec();
ModelSpec cnn_a_spec();
ModelSpec cnn_b_spec();
ModelSpec holdout_cnn_spec();

/// The default zoo in dependency order (ensemble sources before the models trained on them).
std::vector<ZooEntry> default_zoo_entries(std::uint64_t seed);

bool is_adversarially_trained(const std::string& name);

using ProgressFn = std::function<void(const std::string&)>;

ModelZoo train_zoo(const std::vector<ZooEntry>& entries, std::span<const ImageRecord> data,
                   const ProgressFn& progress = {});

/// Loads the zoo from `dir` when every entry is present there, otherwise trains and saves it.
ModelZoo load_or_train_zoo(const std::filesystem::path& dir, const std::vector<ZooEntry>& entries,
                           std::span<const ImageRecord> data, const ProgressFn& progress = {});

}  // namespace advarena
