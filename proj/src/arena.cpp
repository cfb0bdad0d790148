#include "advarena/arena.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "advarena/attacks.hpp"
#include "advarena/process.hpp"
#include "advarena/rng.hpp"
#include "advarena/weights_io.hpp"

namespace advarena {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string to_string(SubmissionKind k) {
  switch (k) {
    case SubmissionKind::nontargeted_attack:
      return "nontargeted_attack";
    case SubmissionKind::targeted_attack:
      return "targeted_attack";
    case SubmissionKind::defense:
      return "defense";
  }
  return "?";
}

SubmissionKind submission_kind_from_string(const std::string& s) {
  for (auto k : {SubmissionKind::nontargeted_attack, SubmissionKind::targeted_attack, SubmissionKind::defense})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown submission kind '" + s + "'");
}

std::string to_string(CellStatus s) {
  switch (s) {
    case CellStatus::ok:
      return "ok";
    case CellStatus::timeout:
      return "timeout";
    case CellStatus::crash:
      return "crash";
  }
  return "?";
}

std::vector<BatchPlan> plan_round(std::size_t n_images, std::size_t batch_size, std::uint64_t seed) {
  if (n_images == 0) throw std::invalid_argument("plan_round: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("plan_round: batch size must be >= 1");
  std::vector<BatchPlan> plan;
  for (std::size_t start = 0, b = 0; start < n_images; start += batch_size, ++b) {
    BatchPlan p;
    p.index = b;
    for (std::size_t i = start; i < std::min(n_images, start + batch_size); ++i) p.images.push_back(i);
    Rng rng(derive_seed(seed, "epsilon", b));
    p.epsilon = kArenaEpsilons[rng.uniform_int(kArenaEpsilons.size())];
    plan.push_back(std::move(p));
  }
  return plan;
}

int epsilon_to_int(double epsilon) { return static_cast<int>(std::lround(epsilon * 255.0)); }

std::uint64_t cell_seed(std::uint64_t round_seed, const std::string& submission_id, std::size_t batch) {
  return derive_seed(round_seed, hash_name(submission_id), batch);
}

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r' || c == ',') c = ' ';
  if (s.size() > 200) s = s.substr(0, 200) + "...";
  return s;
}

std::string log_tail(const fs::path& log) {
  std::ifstream in(log);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (all.size() > 160) all = all.substr(all.size() - 160);
  return one_line(all);
}

fs::path fresh_dir(const fs::path& work_dir, const std::string& name) {
  fs::path base = work_dir.empty() ? fs::temp_directory_path() / ("advarena_" + std::to_string(::getpid())) : work_dir;
  std::string safe = name;
  for (char& c : safe)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  fs::path dir = base / safe;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
    while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
    out.push_back(cur);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<long long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

AttackBatchResult attack_in_process(const Submission& sub, std::span<const ImageRecord> batch, double epsilon,
                                    double budget, std::uint64_t seed) {
  AttackBatchResult r;
  r.images.resize(batch.size());
  const auto t0 = Clock::now();
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& rec = batch[k];
    std::optional<std::size_t> target;
    if (sub.kind == SubmissionKind::targeted_attack) target = rec.target_label;
    try {
      Tensor out = sub.attack(AttackInput{rec.pixels, epsilon, target, derive_seed(seed, k)});
      if (seconds_since(t0) > budget) {
        r.report.status = CellStatus::timeout;
        r.report.reason = "budget exhausted at image " + std::to_string(k);
        break;
      }
      if (out.shape() != rec.pixels.shape()) {
        r.report.reason = "wrong output shape for " + rec.id;
        continue;
      }
      r.images[k] = project_linf(out, rec.pixels, epsilon);
      ++r.report.completed;
    } catch (const std::exception& e) {
      r.report.status = CellStatus::crash;
      r.report.reason = one_line(e.what());
      break;
    }
  }
  r.report.seconds = seconds_since(t0);
  return r;
}

AttackBatchResult attack_subprocess(const Submission& sub, std::span<const ImageRecord> batch, double epsilon,
                                    double budget, std::size_t batch_index, const fs::path& work_dir) {
  AttackBatchResult r;
  r.images.resize(batch.size());
  const fs::path dir = fresh_dir(work_dir, "attack_" + sub.id + "_b" + std::to_string(batch_index));
  const fs::path in = dir / "in", out = dir / "out";
  fs::create_directories(in);
  fs::create_directories(out);
  const bool targeted = sub.kind == SubmissionKind::targeted_attack;
  {
    std::ofstream csv(in / "images.csv");
    csv << (targeted ? "image_id,filename,target_label\n" : "image_id,filename\n");
    for (const auto& rec : batch) {
      write_image(rec.pixels, in / (rec.id + ".ppm"));
      csv << rec.id << ',' << rec.id << ".ppm";
      if (targeted) csv << ',' << rec.target_label;
      csv << '\n';
    }
  }
  const std::string cmd = sub.command + " --input-dir " + shell_quote(in.string()) + " --output-dir " +
                          shell_quote(out.string()) + " --epsilon " + std::to_string(epsilon_to_int(epsilon));
  const auto pr = run_shell(cmd, budget, dir / "log.txt");
  r.report.seconds = pr.seconds;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const fs::path f = out / (batch[k].id + ".ppm");
    if (!fs::exists(f)) continue;
    try {
      Tensor img = read_image(f);
      if (img.shape() != batch[k].pixels.shape()) continue;
      r.images[k] = project_linf(img, batch[k].pixels, epsilon);
      ++r.report.completed;
    } catch (const std::exception&) {
      // partial or corrupt output: image counts as missing
    }
  }
  if (pr.timed_out) {
    r.report.status = CellStatus::timeout;
    r.report.reason = pr.describe();
  } else if (!pr.ok()) {
    r.report.status = CellStatus::crash;
    r.report.reason = pr.describe() + ": " + log_tail(dir / "log.txt");
  }
  fs::remove_all(dir);
  return r;
}

DefenseBatchResult defense_in_process(const Submission& sub, std::span<const DefenseInputImage> images,
                                      std::size_t n_classes, double budget, std::uint64_t seed) {
  DefenseBatchResult r;
  r.labels.resize(images.size());
  const auto t0 = Clock::now();
  for (std::size_t k = 0; k < images.size(); ++k) {
    try {
      const long long label = sub.defense(*images[k].pixels, derive_seed(seed, k));
      if (seconds_since(t0) > budget) {
        r.report.status = CellStatus::timeout;
        r.report.reason = "budget exhausted at image " + std::to_string(k);
        break;
      }
      if (label >= 0 && static_cast<unsigned long long>(label) < n_classes) {
        r.labels[k] = static_cast<std::size_t>(label);
        ++r.report.completed;
      }
    } catch (const std::exception& e) {
      r.report.status = CellStatus::crash;
      r.report.reason = one_line(e.what());
      break;
    }
  }
  r.report.seconds = seconds_since(t0);
  return r;
}

DefenseBatchResult defense_subprocess(const Submission& sub, std::span<const DefenseInputImage> images,
                                      std::size_t n_classes, double budget, const std::string& cell_name,
                                      const fs::path& work_dir) {
  DefenseBatchResult r;
  r.labels.resize(images.size());
  const fs::path dir = fresh_dir(work_dir, cell_name);
  const fs::path in = dir / "in", labels_file = dir / "labels.csv";
  fs::create_directories(in);
  {
    std::ofstream csv(in / "images.csv");
    csv << "image_id,filename\n";
    for (const auto& img : images) {
      write_image(*img.pixels, in / (img.id + ".ppm"));
      csv << img.id << ',' << img.id << ".ppm\n";
    }
  }
  const std::string cmd = sub.command + " --input-dir " + shell_quote(in.string()) + " --output-file " +
                          shell_quote(labels_file.string());
  const auto pr = run_shell(cmd, budget, dir / "log.txt");
  r.report.seconds = pr.seconds;

  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < images.size(); ++k) index[images[k].id] = k;
  std::ifstream in_labels(labels_file);
  std::string line;
  while (std::getline(in_labels, line)) {
    const auto f = split_fields(line);
    if (f.size() < 2) continue;
    auto it = index.find(f[0]);
    if (it == index.end()) continue;
    const auto v = parse_int(f[1]);
    if (v && *v >= 0 && static_cast<unsigned long long>(*v) < n_classes && !r.labels[it->second]) {
      r.labels[it->second] = static_cast<std::size_t>(*v);
      ++r.report.completed;
    }
  }
  if (pr.timed_out) {
    r.report.status = CellStatus::timeout;
    r.report.reason = pr.describe();
  } else if (!pr.ok()) {
    r.report.status = CellStatus::crash;
    r.report.reason = pr.describe() + ": " + log_tail(dir / "log.txt");
  }
  fs::remove_all(dir);
  return r;
}

}  // namespace

AttackBatchResult run_attack_on_batch(const Submission& sub, std::span<const ImageRecord> batch, double epsilon,
                                      double budget_seconds, std::uint64_t seed, const fs::path& work_dir) {
  if (!is_attack(sub.kind)) throw std::invalid_argument("run_attack_on_batch: " + sub.id + " is not an attack");
  if (!sub.is_subprocess() && !sub.attack)
    throw std::invalid_argument("run_attack_on_batch: " + sub.id + " has no runner");
  // the batch index only names scratch directories; derive a stable one from the seed
  AttackBatchResult r = sub.is_subprocess()
                            ? attack_subprocess(sub, batch, epsilon, budget_seconds, seed % 1000000007ULL, work_dir)
                            : attack_in_process(sub, batch, epsilon, budget_seconds, seed);
  r.report.submission_id = sub.id;
  r.report.epsilon = epsilon;
  r.report.total = batch.size();
  return r;
}

DefenseBatchResult run_defense_on_batch(const Submission& sub, std::span<const DefenseInputImage> images,
                                        std::size_t n_classes, double budget_seconds, std::uint64_t seed,
                                        const fs::path& work_dir) {
  if (sub.kind != SubmissionKind::defense)
    throw std::invalid_argument("run_defense_on_batch: " + sub.id + " is not a defense");
  if (!sub.is_subprocess() && !sub.defense)
    throw std::invalid_argument("run_defense_on_batch: " + sub.id + " has no runner");
  DefenseBatchResult r =
      sub.is_subprocess()
          ? defense_subprocess(sub, images, n_classes, budget_seconds,
                               "defense_" + sub.id + "_" + std::to_string(seed % 1000000007ULL), work_dir)
          : defense_in_process(sub, images, n_classes, budget_seconds, seed);
  r.report.submission_id = sub.id;
  r.report.total = images.size();
  return r;
}

// ---- outcome matrix --------------------------------------------------------------------------------

void OutcomeMatrix::resize() {
  attack_present.assign(attack_ids.size(), std::vector<bool>(n_images(), true));
  labels.assign(attack_ids.size() * defense_ids.size() * n_images(), kNullLabel);
}

std::string OutcomeMatrix::to_csv() const {
  std::ostringstream os;
  os << "# defenses:";
  for (const auto& d : defense_ids) os << ' ' << d;
  os << "\nattack_id,attack_kind,defense_id,image_id,true_label,target_label,attack_image,label\n";
  for (std::size_t a = 0; a < attack_ids.size(); ++a) {
    const std::size_t n_def = std::max<std::size_t>(defense_ids.size(), 1);
    for (std::size_t d = 0; d < n_def; ++d)
      for (std::size_t k = 0; k < n_images(); ++k) {
        os << attack_ids[a] << ',' << to_string(attack_kinds[a]) << ','
           << (defense_ids.empty() ? std::string() : defense_ids[d]) << ',' << image_ids[k] << ','
           << true_labels[k] << ',' << target_labels[k] << ',' << (attack_present[a][k] ? "present" : "missing")
           << ',';
        if (!defense_ids.empty() && attack_present[a][k] && label(a, d, k) != kNullLabel) os << label(a, d, k);
        os << '\n';
      }
  }
  return os.str();
}

OutcomeMatrix OutcomeMatrix::from_csv(const std::string& text) {
  OutcomeMatrix m;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError("outcome matrix line " + std::to_string(line_no) + ": " + why);
  };
  bool saw_header = false;
  std::map<std::string, std::size_t> a_idx, d_idx, k_idx;
  struct Row {
    std::size_t a, d, k;
    bool present;
    int label;
    bool has_defense;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# defenses:", 0) == 0) {
      std::istringstream ls(line.substr(11));
      std::string id;
      while (ls >> id) {
        d_idx.emplace(id, m.defense_ids.size());
        m.defense_ids.push_back(id);
      }
      continue;
    }
    if (line[0] == '#') continue;
    if (!saw_header) {
      if (line != "attack_id,attack_kind,defense_id,image_id,true_label,target_label,attack_image,label")
        fail("unexpected header");
      saw_header = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 8) fail("expected 8 fields, got " + std::to_string(f.size()));
    if (!a_idx.count(f[0])) {
      a_idx[f[0]] = m.attack_ids.size();
      m.attack_ids.push_back(f[0]);
      const auto kind = submission_kind_from_string(f[1]);
      if (!is_attack(kind)) fail("attack " + f[0] + " has kind defense");
      m.attack_kinds.push_back(kind);
    }
    if (!k_idx.count(f[3])) {
      const auto t = parse_int(f[4]), g = parse_int(f[5]);
      if (!t || !g || *t < 0 || *g < 0) fail("bad label columns for image " + f[3]);
      k_idx[f[3]] = m.image_ids.size();
      m.image_ids.push_back(f[3]);
      m.true_labels.push_back(static_cast<std::size_t>(*t));
      m.target_labels.push_back(static_cast<std::size_t>(*g));
    }
    Row r{a_idx[f[0]], 0, k_idx[f[3]], f[6] == "present", kNullLabel, !f[2].empty()};
    if (f[6] != "present" && f[6] != "missing") fail("attack_image must be present or missing");
    if (r.has_defense) {
      auto it = d_idx.find(f[2]);
      if (it == d_idx.end()) fail("defense " + f[2] + " not listed in the header comment");
      r.d = it->second;
    }
    if (!f[7].empty()) {
      const auto v = parse_int(f[7]);
      if (!v || *v < 0) fail("bad label '" + f[7] + "'");
      r.label = static_cast<int>(*v);
    }
    rows.push_back(r);
  }
  if (!saw_header) throw FormatError("outcome matrix: missing header");
  m.resize();
  for (const auto& r : rows) {
    if (!r.present) m.attack_present[r.a][r.k] = false;
    if (r.has_defense) m.label(r.a, r.d, r.k) = r.label;
  }
  return m;
}

// ---- scoring ---------------------------------------------------------------------------------------

std::vector<bool> eligible_defenses(const OutcomeMatrix& m) {
  std::vector<bool> ok(m.defense_ids.size(), true);
  for (std::size_t d = 0; d < m.defense_ids.size(); ++d)
    for (std::size_t a = 0; a < m.attack_ids.size() && ok[d]; ++a)
      for (std::size_t k = 0; k < m.n_images(); ++k)
        if (m.attack_present[a][k] && m.label(a, d, k) == kNullLabel) {
          ok[d] = false;
          break;
        }
  return ok;
}

std::vector<bool> eligible_attacks(const OutcomeMatrix& m) {
  std::vector<bool> ok(m.attack_ids.size());
  for (std::size_t a = 0; a < m.attack_ids.size(); ++a)
    ok[a] = std::all_of(m.attack_present[a].begin(), m.attack_present[a].end(), [](bool p) { return p; });
  return ok;
}

namespace {

// Points for attack a against defense d on image k (missing image: defender is taken to be correct).
bool attack_point(const OutcomeMatrix& m, std::size_t a, std::size_t d, std::size_t k) {
  if (!m.attack_present[a][k]) return false;
  const int l = m.label(a, d, k);
  if (m.attack_kinds[a] == SubmissionKind::targeted_attack)
    return l != kNullLabel && static_cast<std::size_t>(l) == m.target_labels[k];
  return l == kNullLabel || static_cast<std::size_t>(l) != m.true_labels[k];
}

bool defense_point(const OutcomeMatrix& m, std::size_t a, std::size_t d, std::size_t k) {
  if (!m.attack_present[a][k]) return true;
  const int l = m.label(a, d, k);
  return l != kNullLabel && static_cast<std::size_t>(l) == m.true_labels[k];
}

}  // namespace

std::vector<double> worst_case_scores(const OutcomeMatrix& m) {
  const auto A = eligible_attacks(m), D = eligible_defenses(m);
  const double N = static_cast<double>(m.n_images());
  std::vector<double> out;
  for (std::size_t a = 0; a < m.attack_ids.size(); ++a) {
    std::optional<double> worst;
    for (std::size_t d = 0; d < m.defense_ids.size(); ++d) {
      if (!D[d]) continue;
      long long pts = 0;
      for (std::size_t k = 0; k < m.n_images(); ++k) pts += attack_point(m, a, d, k);
      const double rate = static_cast<double>(pts) / N;
      worst = worst ? std::min(*worst, rate) : rate;
    }
    out.push_back(worst.value_or(0.0));
  }
  for (std::size_t d = 0; d < m.defense_ids.size(); ++d) {
    std::optional<double> worst;
    for (std::size_t a = 0; a < m.attack_ids.size(); ++a) {
      if (!A[a]) continue;
      long long pts = 0;
      for (std::size_t k = 0; k < m.n_images(); ++k) pts += defense_point(m, a, d, k);
      const double acc = static_cast<double>(pts) / N;
      worst = worst ? std::min(*worst, acc) : acc;
    }
    out.push_back(worst.value_or(0.0));
  }
  return out;
}

Scoreboard compute_scores(const OutcomeMatrix& m) {
  if (m.n_images() == 0) throw std::invalid_argument("compute_scores: no images");
  const auto A = eligible_attacks(m), D = eligible_defenses(m);
  const auto worst = worst_case_scores(m);
  const std::size_t nA = static_cast<std::size_t>(std::count(A.begin(), A.end(), true));
  const std::size_t nD = static_cast<std::size_t>(std::count(D.begin(), D.end(), true));
  const double N = static_cast<double>(m.n_images());

  Scoreboard sb;
  if (nD == 0 && !m.attack_ids.empty()) {
    sb.scoreable = false;
    sb.diagnostics.push_back("no defense labelled every image; attack scores are undefined");
  }
  if (nA == 0 && !m.defense_ids.empty()) {
    sb.scoreable = false;
    sb.diagnostics.push_back("no attack produced every image; defense scores are undefined");
  }
  for (std::size_t a = 0; a < m.attack_ids.size(); ++a) {
    ScoreRow r;
    r.id = m.attack_ids[a];
    r.kind = m.attack_kinds[a];
    r.eligible = A[a];
    r.worst_case_informational = r.kind == SubmissionKind::targeted_attack;
    for (std::size_t d = 0; d < m.defense_ids.size(); ++d)
      if (D[d])
        for (std::size_t k = 0; k < m.n_images(); ++k) r.raw += attack_point(m, a, d, k);
    r.normalized = nD ? static_cast<double>(r.raw) / (static_cast<double>(nD) * N) : 0.0;
    r.worst_case = worst[a];
    sb.rows.push_back(r);
  }
  for (std::size_t d = 0; d < m.defense_ids.size(); ++d) {
    ScoreRow r;
    r.id = m.defense_ids[d];
    r.kind = SubmissionKind::defense;
    r.eligible = D[d];
    for (std::size_t a = 0; a < m.attack_ids.size(); ++a)
      if (A[a])
        for (std::size_t k = 0; k < m.n_images(); ++k) r.raw += defense_point(m, a, d, k);
    r.normalized = nA ? static_cast<double>(r.raw) / (static_cast<double>(nA) * N) : 0.0;
    r.worst_case = worst[m.attack_ids.size() + d];
    sb.rows.push_back(r);
  }
  return sb;
}

const ScoreRow& Scoreboard::row(const std::string& id) const {
  for (const auto& r : rows)
    if (r.id == id) return r;
  throw std::out_of_range("scoreboard has no submission '" + id + "'");
}

std::string Scoreboard::to_csv() const {
  std::ostringstream os;
  os << "id,kind,raw,normalized,worst_case\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.id << ',' << to_string(r.kind) << ',' << r.raw << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.normalized, r.worst_case);
    os << buf << '\n';
  }
  return os.str();
}

// ---- round -----------------------------------------------------------------------------------------

namespace {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

RoundResult run_round(std::span<const Submission> submissions, const DatasetSplit& split, const RoundConfig& cfg) {
  if (split.records.empty()) throw std::invalid_argument("run_round: empty dataset");
  if (!(cfg.budget_seconds > 0.0)) throw std::invalid_argument("run_round: budget must be positive");
  {
    std::map<std::string, int> seen;
    for (const auto& s : submissions)
      if (seen[s.id]++) throw std::invalid_argument("run_round: duplicate submission id '" + s.id + "'");
  }
  RoundResult res;
  res.plan = plan_round(split.records.size(), cfg.batch_size, cfg.seed);

  std::vector<const Submission*> attacks, defenses;
  for (const auto& s : submissions) (is_attack(s.kind) ? attacks : defenses).push_back(&s);

  auto& m = res.outcomes;
  for (const auto& r : split.records) {
    m.image_ids.push_back(r.id);
    m.true_labels.push_back(r.true_label);
    m.target_labels.push_back(r.target_label);
  }
  for (const auto* a : attacks) {
    m.attack_ids.push_back(a->id);
    m.attack_kinds.push_back(a->kind);
  }
  for (const auto* d : defenses) m.defense_ids.push_back(d->id);
  m.resize();

  const std::size_t B = res.plan.size();
  std::vector<std::vector<std::optional<Tensor>>> adv(attacks.size(),
                                                      std::vector<std::optional<Tensor>>(split.records.size()));
  std::vector<CellReport> attack_cells(attacks.size() * B);

  parallel_for(attacks.size() * B, cfg.workers, [&](std::size_t cell) {
    const std::size_t a = cell / B, b = cell % B;
    const auto& plan = res.plan[b];
    std::vector<ImageRecord> batch;
    for (auto i : plan.images) batch.push_back(split.records[i]);
    CellReport rep;
    try {
      auto out = run_attack_on_batch(*attacks[a], batch, plan.epsilon, cfg.budget_seconds,
                                     cell_seed(cfg.seed, attacks[a]->id, b), cfg.work_dir);
      for (std::size_t j = 0; j < plan.images.size(); ++j) adv[a][plan.images[j]] = std::move(out.images[j]);
      rep = out.report;
    } catch (const std::exception& e) {
      rep.submission_id = attacks[a]->id;
      rep.status = CellStatus::crash;
      rep.total = plan.images.size();
      rep.reason = std::string("infrastructure: ") + e.what();
    }
    rep.batch = b;
    rep.epsilon = plan.epsilon;
    attack_cells[cell] = rep;
  });

  for (std::size_t a = 0; a < attacks.size(); ++a)
    for (std::size_t k = 0; k < split.records.size(); ++k) m.attack_present[a][k] = adv[a][k].has_value();

  const std::size_t n_classes = split.n_classes;
  std::vector<CellReport> defense_cells(defenses.size() * attacks.size() * B);
  parallel_for(defense_cells.size(), cfg.workers, [&](std::size_t cell) {
    const std::size_t d = cell / (attacks.size() * B);
    const std::size_t a = (cell / B) % attacks.size();
    const std::size_t b = cell % B;
    const auto& plan = res.plan[b];
    std::vector<DefenseInputImage> inputs;
    std::vector<std::size_t> where;
    for (auto i : plan.images)
      if (adv[a][i]) {
        inputs.push_back({split.records[i].id, &*adv[a][i]});
        where.push_back(i);
      }
    CellReport rep;
    if (inputs.empty()) {
      rep.submission_id = defenses[d]->id;
      rep.reason = "no images";
    } else {
      try {
        const auto seed = derive_seed(cell_seed(cfg.seed, defenses[d]->id, b), hash_name(attacks[a]->id));
        auto out = run_defense_on_batch(*defenses[d], inputs, n_classes, cfg.budget_seconds, seed, cfg.work_dir);
        for (std::size_t j = 0; j < where.size(); ++j)
          if (out.labels[j]) m.label(a, d, where[j]) = static_cast<int>(*out.labels[j]);
        rep = out.report;
      } catch (const std::exception& e) {
        rep.submission_id = defenses[d]->id;
        rep.status = CellStatus::crash;
        rep.reason = std::string("infrastructure: ") + e.what();
      }
    }
    rep.attack_id = attacks[a]->id;
    rep.batch = b;
    rep.epsilon = plan.epsilon;
    rep.total = inputs.size();
    defense_cells[cell] = rep;
  });

  res.cells = std::move(attack_cells);
  res.cells.insert(res.cells.end(), defense_cells.begin(), defense_cells.end());
  res.scoreboard = compute_scores(m);
  return res;
}

double median_batch_seconds(std::span<const CellReport> cells, const std::string& submission_id) {
  std::vector<double> t;
  for (const auto& c : cells)
    if (c.submission_id == submission_id) t.push_back(c.seconds);
  if (t.empty()) return 0.0;
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

void write_round_reports(const RoundResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write_text("scoreboard.csv", result.scoreboard.to_csv());
  write_text("outcomes.csv", result.outcomes.to_csv());

  std::ostringstream cells;
  cells << "submission_id,attack_id,batch,epsilon,status,completed,total,seconds,reason\n";
  char buf[64];
  for (const auto& c : result.cells) {
    std::snprintf(buf, sizeof buf, "%.4f", c.seconds);
    cells << c.submission_id << ',' << c.attack_id << ',' << c.batch << ',' << epsilon_to_int(c.epsilon) << ','
          << to_string(c.status) << ',' << c.completed << ',' << c.total << ',' << buf << ',' << one_line(c.reason)
          << '\n';
  }
  write_text("cells.csv", cells.str());

  std::ostringstream timing;
  timing << "id,kind,median_batch_seconds\n";
  for (const auto& r : result.scoreboard.rows) {
    std::snprintf(buf, sizeof buf, "%.4f", median_batch_seconds(result.cells, r.id));
    timing << r.id << ',' << to_string(r.kind) << ',' << buf << '\n';
  }
  write_text("timing.csv", timing.str());
}

}  // namespace advarena
