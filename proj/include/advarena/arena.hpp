#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advarena/dataset.hpp"
#include "advarena/tensor.hpp"

namespace advarena {

enum class SubmissionKind { nontargeted_attack, targeted_attack, defense };

std::string to_string(SubmissionKind k);
SubmissionKind submission_kind_from_string(const std::string& s);
inline bool is_attack(SubmissionKind k) { return k != SubmissionKind::defense; }

/// What an in-process attack receives for one image. Non-targeted attacks never see the true label.
struct AttackInput {
  const Tensor& image;
  double epsilon;
  std::optional<std::size_t> target;  // targeted attacks only
  std::uint64_t seed;
};

using AttackFn = std::function<Tensor(const AttackInput&)>;
/// Returns the predicted class; any value outside [0, C) is recorded as a null label.
using DefenseFn = std::function<long long(const Tensor& image, std::uint64_t seed)>;

/// A participant. Runs in-process when `command` is empty, otherwise as `/bin/sh -c command ...` following the
/// directory protocol described in the README.
struct Submission {
  std::string id;
  SubmissionKind kind = SubmissionKind::defense;
  std::string command;
  AttackFn attack;
  DefenseFn defense;

  bool is_subprocess() const { return !command.empty(); }
};

struct BatchPlan {
  std::size_t index = 0;
  std::vector<std::size_t> images;  // indices into the split
  double epsilon = 0.0;
};

/// Contiguous batches of at most batch_size images; epsilon per batch drawn from kArenaEpsilons.
std::vector<BatchPlan> plan_round(std::size_t n_images, std::size_t batch_size, std::uint64_t seed);

/// Integer epsilon in 0..255 units, as passed to subprocess attacks.
int epsilon_to_int(double epsilon);

enum class CellStatus { ok, timeout, crash };
std::string to_string(CellStatus s);

struct CellReport {
  std::string submission_id;
  std::string attack_id;  // defense cells only
  std::size_t batch = 0;
  double epsilon = 0.0;
  CellStatus status = CellStatus::ok;
  std::size_t completed = 0;
  std::size_t total = 0;
  double seconds = 0.0;
  std::string reason;
};

/// Seed of a (submission, batch) cell: independent of scheduling.
std::uint64_t cell_seed(std::uint64_t round_seed, const std::string& submission_id, std::size_t batch);

struct AttackBatchResult {
  std::vector<std::optional<Tensor>> images;  // projected into the epsilon ball; nullopt = missing
  CellReport report;
};

/// Runs an attack on one batch under a wall-clock budget. In-process runners are checked between images;
/// subprocess runners are killed at the deadline. Whatever the submission emits is projected.
AttackBatchResult run_attack_on_batch(const Submission& sub, std::span<const ImageRecord> batch, double epsilon,
                                      double budget_seconds, std::uint64_t seed,
                                      const std::filesystem::path& work_dir);

struct DefenseInputImage {
  std::string id;
  const Tensor* pixels;
};

struct DefenseBatchResult {
  std::vector<std::optional<std::size_t>> labels;  // nullopt = null label
  CellReport report;
};

DefenseBatchResult run_defense_on_batch(const Submission& sub, std::span<const DefenseInputImage> images,
                                        std::size_t n_classes, double budget_seconds, std::uint64_t seed,
                                        const std::filesystem::path& work_dir);

/// Label stored for (attack, defense, image).
inline constexpr int kNullLabel = -1;

struct OutcomeMatrix {
  std::vector<std::string> image_ids;
  std::vector<std::size_t> true_labels;
  std::vector<std::size_t> target_labels;
  std::vector<std::string> attack_ids;
  std::vector<SubmissionKind> attack_kinds;
  std::vector<std::string> defense_ids;
  std::vector<std::vector<bool>> attack_present;  // [attack][image]
  std::vector<int> labels;                        // [(attack * D + defense) * N + image]

  std::size_t n_images() const { return image_ids.size(); }
  /// Sizes `attack_present` and `labels` (all null, all images present).
  void resize();
  int& label(std::size_t a, std::size_t d, std::size_t k) { return labels[(a * defense_ids.size() + d) * n_images() + k]; }
  int label(std::size_t a, std::size_t d, std::size_t k) const {
    return labels[(a * defense_ids.size() + d) * n_images() + k];
  }

  /// Columns: attack_id,attack_kind,defense_id,image_id,true_label,target_label,attack_image,label
  /// attack_image is "present" or "missing"; label is empty for null. Defenses with no attacks are listed
  /// in a leading "# defenses:" comment line so the file round-trips.
  std::string to_csv() const;
  static OutcomeMatrix from_csv(const std::string& text);
};

struct ScoreRow {
  std::string id;
  SubmissionKind kind = SubmissionKind::defense;
  long long raw = 0;
  double normalized = 0.0;
  double worst_case = 0.0;
  bool eligible = false;                 // member of A (attacks) or D (defenses)
  bool worst_case_informational = false;  // targeted attacks
};

struct Scoreboard {
  std::vector<ScoreRow> rows;  // attacks in matrix order, then defenses
  bool scoreable = true;
  std::vector<std::string> diagnostics;

  const ScoreRow& row(const std::string& id) const;
  /// Columns: id,kind,raw,normalized,worst_case
  std::string to_csv() const;
};

/// Eligible defenses D: labelled every image they were given. Eligible attacks A: produced every image.
std::vector<bool> eligible_defenses(const OutcomeMatrix& m);
std::vector<bool> eligible_attacks(const OutcomeMatrix& m);

/// Per-submission minimum over the opposing eligible set (attacks in matrix order, then defenses).
std::vector<double> worst_case_scores(const OutcomeMatrix& m);

Scoreboard compute_scores(const OutcomeMatrix& m);

struct RoundConfig {
  std::size_t batch_size = 100;
  double budget_seconds = 10.0;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::filesystem::path work_dir;  // scratch space for subprocess runners
};

struct RoundResult {
  std::vector<BatchPlan> plan;
  OutcomeMatrix outcomes;
  Scoreboard scoreboard;
  std::vector<CellReport> cells;
};

/// Plan, attack every batch, project, defend every (attack, batch), score. Cells run on `workers` threads;
/// each cell writes only its own slot, so the result does not depend on scheduling.
RoundResult run_round(std::span<const Submission> submissions, const DatasetSplit& split, const RoundConfig& cfg);

/// Writes scoreboard.csv, outcomes.csv, cells.csv and timing.csv into dir.
void write_round_reports(const RoundResult& result, const std::filesystem::path& dir);

/// Median of the per-batch wall times of one submission's cells (0 when it has none).
double median_batch_seconds(std::span<const CellReport> cells, const std::string& submission_id);

}  // namespace advarena
