#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "advarena/arena.hpp"
#include "advarena/attack_net.hpp"
#include "advarena/denoiser.hpp"
#include "advarena/zoo.hpp"

namespace advarena {

/// Malformed or unresolvable run configuration. The message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One roster entry. In-process entries name a built-in `method`; subprocess entries give a shell `command`.
struct SubmissionSpec {
  std::string id;
  SubmissionKind kind = SubmissionKind::defense;
  std::string method;
  std::string command;
  nlohmann::json params = nlohmann::json::object();
};

struct RunConfig {
  std::filesystem::path dataset_dir = "data";
  std::filesystem::path models_dir = "models";
  std::filesystem::path output_dir = "out";
  std::string split = "dev";
  std::uint64_t seed = 1;
  std::size_t batch_size = 25;
  double budget_seconds = 60.0;
  std::size_t workers = 1;
  std::vector<SubmissionSpec> submissions;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static RunConfig load(const std::filesystem::path& path);

  const SubmissionSpec& submission(const std::string& id) const;
};

/// The stock roster: six attacks and seven defenses over the default zoo.
RunConfig default_run_config();

/// Built-in in-process methods, for documentation and validation.
const std::vector<std::string>& attack_methods();
const std::vector<std::string>& defense_methods();

/// Trained artifacts a roster can refer to. Layout under the models dir:
///   <dir>/<model>.advw, <dir>/denoisers/<name>.advw, <dir>/attack_nets/<name>.advw
struct Artifacts {
  ModelZoo zoo;
  std::map<std::string, Denoiser> denoisers;
  std::map<std::string, AttackNet> attack_nets;

  static Artifacts load(const std::filesystem::path& models_dir);
};

/// Resolves every spec into a runnable Submission. The returned callables point into `artifacts`, which must
/// outlive them. Throws ConfigError naming the field for unknown methods or names.
std::vector<Submission> build_submissions(const RunConfig& cfg, const Artifacts& artifacts);

}  // namespace advarena
