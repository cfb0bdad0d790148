#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "advarena/arena.hpp"
#include "advarena/attack_net.hpp"
#include "advarena/attacks.hpp"
#include "advarena/dataset.hpp"
#include "advarena/denoiser.hpp"
#include "advarena/roster.hpp"
#include "advarena/weights_io.hpp"
#include "advarena/zoo.hpp"

namespace advarena::cli {

namespace fs = std::filesystem;

namespace {

// Usage-class failure: exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void require_dir(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw UsageError(flag + ": required");
  if (!fs::is_directory(p)) throw UsageError(flag + ": directory not found: " + p.string());
}

DatasetSplit load_named_split(const fs::path& dataset_dir, const std::string& name) {
  require_dir(dataset_dir, "--dataset-dir");
  const fs::path dir = dataset_dir / name;
  if (!fs::is_directory(dir)) throw UsageError("--dataset-dir: no '" + name + "' split under " + dataset_dir.string());
  return load_split(dir, name);
}

ModelZoo load_zoo(const fs::path& models_dir) {
  require_dir(models_dir, "--models-dir");
  return ModelZoo::load(models_dir);
}

std::vector<const Classifier*> resolve_models(const ModelZoo& zoo, const std::string& list, const std::string& flag) {
  std::vector<const Classifier*> out;
  for (const auto& name : split_list(list)) {
    if (!zoo.contains(name)) throw UsageError(flag + ": unknown model '" + name + "'");
    out.push_back(&zoo.get(name));
  }
  if (out.empty()) throw UsageError(flag + ": empty model list");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path, const std::string& flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(flag + ": cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---- subcommands -----------------------------------------------------------------------------------

struct GenDatasetOpts {
  fs::path output_dir;
  std::uint64_t seed = 7;
  std::size_t classes = 10;
  std::size_t size = 32;
  std::size_t train_per_class = 200;
  std::size_t dev_per_class = 10;
  std::size_t final_per_class = 50;
};

void gen_dataset(const GenDatasetOpts& o, std::ostream& out) {
  if (o.output_dir.empty()) throw UsageError("--output-dir: required");
  const std::pair<const char*, std::size_t> splits[] = {
      {"train", o.train_per_class}, {"dev", o.dev_per_class}, {"final", o.final_per_class}};
  for (const auto& [name, per_class] : splits) {
    if (per_class == 0) continue;
    const auto split = generate(o.classes, per_class, o.size, derive_seed(o.seed, hash_name(name)), name);
    save_split(split, o.output_dir / name);
    out << name << ": " << split.size() << " images -> " << (o.output_dir / name).string() << '\n';
  }
}

struct TrainModelsOpts {
  fs::path dataset_dir, output_dir;
  std::uint64_t seed = 1;
  std::string only;
};

void train_models(const TrainModelsOpts& o, std::ostream& out) {
  if (o.output_dir.empty()) throw UsageError("--output-dir: required");
  const auto train = load_named_split(o.dataset_dir, "train");
  auto entries = default_zoo_entries(o.seed);
  if (!o.only.empty()) {
    const auto wanted = split_list(o.only);
    for (const auto& w : wanted)
      if (std::none_of(entries.begin(), entries.end(), [&](const ZooEntry& e) { return e.name == w; }))
        throw UsageError("--only: unknown model '" + w + "'");
    // keep ensemble sources that the requested models depend on
    std::vector<std::string> keep = wanted;
    for (const auto& e : entries)
      if (std::find(wanted.begin(), wanted.end(), e.name) != wanted.end())
        keep.insert(keep.end(), e.train.source_models.begin(), e.train.source_models.end());
    std::erase_if(entries, [&](const ZooEntry& e) { return std::find(keep.begin(), keep.end(), e.name) == keep.end(); });
  }
  const auto zoo = train_zoo(entries, train.records, [&](const std::string& n) { out << "training " << n << '\n'; });
  zoo.save(o.output_dir);
  const auto dev_dir = o.dataset_dir / "dev";
  if (fs::is_directory(dev_dir)) {
    const auto dev = load_split(dev_dir, "dev");
    for (const auto& name : zoo.names()) {
      const auto& m = zoo.get(name);
      out << name << " dev accuracy " << fmt(accuracy(dev.records, [&](const Tensor& x) { return m.predict(x); }))
          << '\n';
    }
  }
}

struct TrainDenoiserOpts {
  fs::path dataset_dir, models_dir, output_dir;
  std::string name = "lgd_cnn_a";
  std::string guidance = "lgd";
  std::string guide = "cnn_a";
  std::string sources = "cnn_a,cnn_b,mlp2";
  std::size_t per_class = 20;
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  std::uint64_t seed = 3;
};

void train_denoiser_cmd(const TrainDenoiserOpts& o, std::ostream& out) {
  if (o.output_dir.empty()) throw UsageError("--output-dir: required");
  const auto zoo = load_zoo(o.models_dir);
  const auto train = load_named_split(o.dataset_dir, "train");
  GuidanceKind kind;
  try {
    kind = guidance_from_string(o.guidance);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--guidance: ") + e.what());
  }
  const auto sources = resolve_models(zoo, o.sources, "--sources");
  std::vector<DenoiseRecipe> recipes;
  for (const auto* m : sources) {
    recipes.push_back({"fgsm_" + m->name(), RecipeAttack::fgsm, {m}});
    recipes.push_back({"ifgsm_" + m->name(), RecipeAttack::ifgsm, {m}});
  }
  if (sources.size() > 1) recipes.push_back({"ifgsm_ensemble", RecipeAttack::ifgsm, sources});

  std::size_t n_classes = 0;
  for (const auto& r : train.records) n_classes = std::max(n_classes, r.true_label + 1);
  const auto pairs = generate_trainset(recipes, train.records, n_classes, o.per_class, derive_seed(o.seed, 1));
  Guidance g{kind, nullptr, {}};
  if (kind != GuidanceKind::pixel) g.guide = resolve_models(zoo, o.guide, "--guide").front();
  DenoiserTrainConfig tc;
  tc.epochs = o.epochs;
  tc.learning_rate = o.learning_rate;
  tc.seed = o.seed;
  DenoiserSpec spec;
  spec.height = train.records.front().pixels.dim(1);
  spec.width = train.records.front().pixels.dim(2);
  DenoiserTrainLog log;
  const auto net = train_denoiser(Denoiser::build(o.name, spec, derive_seed(o.seed, 2)), pairs, g, tc, &log);
  const fs::path path = o.output_dir / "denoisers" / (o.name + ".advw");
  fs::create_directories(path.parent_path());
  net.save(path);
  out << "pairs " << pairs.size() << ", loss " << fmt(log.initial_loss) << " -> "
      << fmt(log.epoch_loss.empty() ? log.initial_loss : log.epoch_loss.back()) << '\n'
      << "wrote " << path.string() << '\n';
}

struct TrainAttackNetOpts {
  fs::path dataset_dir, models_dir, output_dir;
  std::string name = "fcn";
  std::string targets = "cnn_a,mlp2";
  std::string hint_model = "cnn_a";
  bool no_hint = false;
  std::size_t epochs = 3;
  std::size_t train_images = 600;
  double learning_rate = 0.01;
  std::uint64_t seed = 4;
};

void train_attack_net_cmd(const TrainAttackNetOpts& o, std::ostream& out) {
  if (o.output_dir.empty()) throw UsageError("--output-dir: required");
  const auto zoo = load_zoo(o.models_dir);
  const auto train = load_named_split(o.dataset_dir, "train");
  const auto targets = resolve_models(zoo, o.targets, "--targets");
  const Classifier* hint = o.no_hint ? nullptr : resolve_models(zoo, o.hint_model, "--hint-model").front();
  AttackNetSpec spec;
  spec.epsilons.assign(kArenaEpsilons.begin(), kArenaEpsilons.end());
  spec.gradient_hint = hint != nullptr;
  spec.height = train.records.front().pixels.dim(1);
  spec.width = train.records.front().pixels.dim(2);
  AttackNetTrainConfig tc;
  tc.epochs = o.epochs;
  tc.learning_rate = o.learning_rate;
  tc.seed = o.seed;
  const std::size_t n = std::min(o.train_images, train.records.size());
  const std::span<const ImageRecord> data(train.records.data(), n);
  const auto net = train_attack_fcn(AttackNet::build(o.name, spec, derive_seed(o.seed, 1)), targets, data, tc, hint);
  const fs::path path = o.output_dir / "attack_nets" / (o.name + ".advw");
  fs::create_directories(path.parent_path());
  net.save(path);
  out << "wrote " << path.string() << '\n';
}

struct RoundOpts {
  std::string config;
  std::string dataset_dir, models_dir, output_dir, split;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size, workers;
  std::optional<double> budget;
};

RunConfig resolve_config(const RoundOpts& o) {
  RunConfig cfg = o.config.empty() ? default_run_config() : RunConfig::load(o.config);
  if (!o.dataset_dir.empty()) cfg.dataset_dir = o.dataset_dir;
  if (!o.models_dir.empty()) cfg.models_dir = o.models_dir;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (!o.split.empty()) cfg.split = o.split;
  if (o.seed) cfg.seed = *o.seed;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.workers) cfg.workers = *o.workers;
  if (o.budget) cfg.budget_seconds = *o.budget;
  if (cfg.batch_size == 0) throw UsageError("--batch-size: must be >= 1");
  if (cfg.workers == 0) throw UsageError("--workers: must be >= 1");
  if (!(cfg.budget_seconds > 0.0)) throw UsageError("--budget: must be positive");
  return cfg;
}

void run_round_cmd(const RoundOpts& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  require_dir(cfg.models_dir, "--models-dir");
  const auto split = load_named_split(cfg.dataset_dir, cfg.split);
  const auto artifacts = Artifacts::load(cfg.models_dir);
  const auto subs = build_submissions(cfg, artifacts);

  RoundConfig rc;
  rc.batch_size = cfg.batch_size;
  rc.budget_seconds = cfg.budget_seconds;
  rc.seed = cfg.seed;
  rc.workers = cfg.workers;
  rc.work_dir = cfg.output_dir / "work";
  const auto result = run_round(subs, split, rc);
  write_round_reports(result, cfg.output_dir);
  write_text(cfg.output_dir / "config.json", cfg.to_json().dump(2) + "\n");
  fs::remove_all(rc.work_dir);

  for (const auto& d : result.scoreboard.diagnostics) out << "warning: " << d << '\n';
  for (const auto& r : result.scoreboard.rows)
    out << r.id << ' ' << to_string(r.kind) << " normalized " << fmt(r.normalized) << " worst " << fmt(r.worst_case)
        << (r.eligible ? "" : " (ineligible)") << '\n';
  out << "reports in " << cfg.output_dir.string() << '\n';
}

void score_cmd(const fs::path& outcomes, const fs::path& output_dir, std::ostream& out) {
  if (output_dir.empty()) throw UsageError("--output-dir: required");
  const auto text = read_text(outcomes, "--outcomes");
  const auto m = OutcomeMatrix::from_csv(text);
  const auto sb = compute_scores(m);
  write_text(output_dir / "scoreboard.csv", sb.to_csv());
  for (const auto& d : sb.diagnostics) out << "warning: " << d << '\n';
  out << "wrote " << (output_dir / "scoreboard.csv").string() << '\n';
}

void report_cmd(const fs::path& round_dir, const fs::path& output_dir, std::ostream& out) {
  require_dir(round_dir, "--round-dir");
  if (output_dir.empty()) throw UsageError("--output-dir: required");
  const auto m = OutcomeMatrix::from_csv(read_text(round_dir / "outcomes.csv", "--round-dir"));
  const auto sb = compute_scores(m);

  // score against rank, one curve per track
  std::ostringstream curves;
  curves << "kind,rank,id,normalized,worst_case\n";
  for (auto kind : {SubmissionKind::defense, SubmissionKind::nontargeted_attack, SubmissionKind::targeted_attack}) {
    std::vector<ScoreRow> rows;
    for (const auto& r : sb.rows)
      if (r.kind == kind) rows.push_back(r);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ScoreRow& a, const ScoreRow& b) { return a.normalized > b.normalized; });
    for (std::size_t i = 0; i < rows.size(); ++i)
      curves << to_string(kind) << ',' << i + 1 << ',' << rows[i].id << ',' << fmt(rows[i].normalized) << ','
             << fmt(rows[i].worst_case) << '\n';
  }
  write_text(output_dir / "rank_curves.csv", curves.str());

  // per-pair rates: attack success (misclassification or target hit) of attack a against defense d
  std::ostringstream pairs;
  pairs << "attack_id,defense_id,success_rate,defense_accuracy\n";
  const double N = static_cast<double>(m.n_images());
  for (std::size_t a = 0; a < m.attack_ids.size(); ++a)
    for (std::size_t d = 0; d < m.defense_ids.size(); ++d) {
      std::size_t hit = 0, correct = 0;
      for (std::size_t k = 0; k < m.n_images(); ++k) {
        const int l = m.label(a, d, k);
        const bool present = m.attack_present[a][k];
        const bool right = !present || (l != kNullLabel && static_cast<std::size_t>(l) == m.true_labels[k]);
        correct += right;
        if (!present) continue;
        if (m.attack_kinds[a] == SubmissionKind::targeted_attack)
          hit += l != kNullLabel && static_cast<std::size_t>(l) == m.target_labels[k];
        else
          hit += !right;
      }
      pairs << m.attack_ids[a] << ',' << m.defense_ids[d] << ',' << fmt(hit / N) << ',' << fmt(correct / N) << '\n';
    }
  write_text(output_dir / "pairwise.csv", pairs.str());
  out << "wrote rank_curves.csv and pairwise.csv to " << output_dir.string() << '\n';
}

struct RunSubmissionOpts {
  std::string config;
  std::string models_dir;
  std::string id;
  fs::path input_dir, output_dir, output_file;
  std::optional<int> epsilon;
  std::uint64_t seed = 1;
};

// Runs one roster entry under the subprocess protocol, so built-in methods can also be exercised out of process.
void run_submission_cmd(const RunSubmissionOpts& o, std::ostream& out) {
  RunConfig cfg = o.config.empty() ? default_run_config() : RunConfig::load(o.config);
  if (!o.models_dir.empty()) cfg.models_dir = o.models_dir;
  const auto& spec = cfg.submission(o.id);
  if (!spec.command.empty()) throw UsageError("--id: '" + o.id + "' is itself a subprocess submission");
  RunConfig one = cfg;
  one.submissions = {spec};
  require_dir(one.models_dir, "--models-dir");
  const auto artifacts = Artifacts::load(one.models_dir);
  const auto sub = build_submissions(one, artifacts).front();
  require_dir(o.input_dir, "--input-dir");

  std::ifstream csv(o.input_dir / "images.csv");
  if (!csv) throw UsageError("--input-dir: no images.csv in " + o.input_dir.string());
  std::string line;
  std::getline(csv, line);
  struct Item {
    std::string id, file;
    std::optional<std::size_t> target;
  };
  std::vector<Item> items;
  while (std::getline(csv, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_list(line);
    if (f.size() < 2) throw std::runtime_error("images.csv: malformed line '" + line + "'");
    Item it{f[0], f[1], std::nullopt};
    if (f.size() > 2) it.target = std::stoul(f[2]);
    items.push_back(it);
  }

  if (is_attack(spec.kind)) {
    if (o.output_dir.empty()) throw UsageError("--output-dir: required for attacks");
    if (!o.epsilon || *o.epsilon < 0 || *o.epsilon > 255) throw UsageError("--epsilon: integer in 0..255 required");
    fs::create_directories(o.output_dir);
    const double eps = *o.epsilon / 255.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const Tensor x = read_image(o.input_dir / items[k].file);
      const Tensor adv = sub.attack(AttackInput{x, eps, items[k].target, derive_seed(o.seed, k)});
      write_image(quantize_to_grid(project_linf(adv, x, eps)), o.output_dir / (items[k].id + ".ppm"));
    }
  } else {
    if (o.output_file.empty()) throw UsageError("--output-file: required for defenses");
    std::ofstream labels(o.output_file);
    if (!labels) throw std::runtime_error("cannot write " + o.output_file.string());
    for (std::size_t k = 0; k < items.size(); ++k) {
      const Tensor x = read_image(o.input_dir / items[k].file);
      labels << items[k].id << ',' << sub.defense(x, derive_seed(o.seed, k)) << '\n' << std::flush;
    }
  }
  out << "processed " << items.size() << " images\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"advarena: desk-scale adversarial attack and defense tournament"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  GenDatasetOpts gd;
  auto* c_gen = app.add_subcommand("gen-dataset", "Render train, dev and final splits");
  c_gen->add_option("--output-dir", gd.output_dir, "Destination directory")->required();
  c_gen->add_option("--seed", gd.seed, "Dataset seed");
  c_gen->add_option("--classes", gd.classes, "Number of classes")->check(CLI::Range(2, 10));
  c_gen->add_option("--size", gd.size, "Image side length")->check(CLI::Range(8, 256));
  c_gen->add_option("--train-per-class", gd.train_per_class);
  c_gen->add_option("--dev-per-class", gd.dev_per_class);
  c_gen->add_option("--final-per-class", gd.final_per_class);

  TrainModelsOpts tm;
  auto* c_tm = app.add_subcommand("train-models", "Train the model zoo on the train split");
  c_tm->add_option("--dataset-dir", tm.dataset_dir)->required();
  c_tm->add_option("--output-dir", tm.output_dir, "Models directory to write")->required();
  c_tm->add_option("--seed", tm.seed);
  c_tm->add_option("--only", tm.only, "Comma-separated subset of the zoo");

  TrainDenoiserOpts td;
  auto* c_td = app.add_subcommand("train-denoiser", "Train a guided denoiser");
  c_td->add_option("--dataset-dir", td.dataset_dir)->required();
  c_td->add_option("--models-dir", td.models_dir)->required();
  c_td->add_option("--output-dir", td.output_dir, "Writes <dir>/denoisers/<name>.advw")->required();
  c_td->add_option("--name", td.name);
  c_td->add_option("--guidance", td.guidance, "pixel, fgd, lgd or cgd");
  c_td->add_option("--guide", td.guide, "Guide model");
  c_td->add_option("--sources", td.sources, "Models attacked to build the training pairs");
  c_td->add_option("--per-class", td.per_class);
  c_td->add_option("--epochs", td.epochs);
  c_td->add_option("--learning-rate", td.learning_rate);
  c_td->add_option("--seed", td.seed);

  TrainAttackNetOpts ta;
  auto* c_ta = app.add_subcommand("train-attack-net", "Train a multi-epsilon attack network");
  c_ta->add_option("--dataset-dir", ta.dataset_dir)->required();
  c_ta->add_option("--models-dir", ta.models_dir)->required();
  c_ta->add_option("--output-dir", ta.output_dir, "Writes <dir>/attack_nets/<name>.advw")->required();
  c_ta->add_option("--name", ta.name);
  c_ta->add_option("--targets", ta.targets, "Models the net is trained to fool");
  c_ta->add_option("--hint-model", ta.hint_model);
  c_ta->add_flag("--no-hint", ta.no_hint, "Train without gradient-hint channels");
  c_ta->add_option("--epochs", ta.epochs);
  c_ta->add_option("--train-images", ta.train_images);
  c_ta->add_option("--learning-rate", ta.learning_rate);
  c_ta->add_option("--seed", ta.seed);

  RoundOpts ro;
  auto* c_round = app.add_subcommand("run-round", "Run every attack against every defense and score");
  c_round->add_option("--config", ro.config, "Roster file (JSON); built-in roster when omitted");
  c_round->add_option("--dataset-dir", ro.dataset_dir);
  c_round->add_option("--models-dir", ro.models_dir);
  c_round->add_option("--output-dir", ro.output_dir);
  c_round->add_option("--split", ro.split);
  c_round->add_option("--seed", ro.seed);
  c_round->add_option("--batch-size", ro.batch_size);
  c_round->add_option("--budget", ro.budget, "Seconds per (submission, batch) cell");
  c_round->add_option("--workers", ro.workers);

  fs::path score_outcomes, score_out;
  auto* c_score = app.add_subcommand("score", "Recompute a scoreboard from an outcome matrix");
  c_score->add_option("--outcomes", score_outcomes)->required();
  c_score->add_option("--output-dir", score_out)->required();

  fs::path report_round, report_out;
  auto* c_report = app.add_subcommand("report", "Summary tables for a finished round");
  c_report->add_option("--round-dir", report_round)->required();
  c_report->add_option("--output-dir", report_out)->required();

  auto* c_print = app.add_subcommand("print-config", "Print the built-in roster as JSON");

  RunSubmissionOpts rs;
  auto* c_rs = app.add_subcommand("run-submission", "Run one roster entry under the subprocess protocol");
  c_rs->add_option("--config", rs.config);
  c_rs->add_option("--models-dir", rs.models_dir);
  c_rs->add_option("--id", rs.id)->required();
  c_rs->add_option("--input-dir", rs.input_dir)->required();
  c_rs->add_option("--output-dir", rs.output_dir);
  c_rs->add_option("--output-file", rs.output_file);
  c_rs->add_option("--epsilon", rs.epsilon);
  c_rs->add_option("--seed", rs.seed);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_gen->parsed()) gen_dataset(gd, out);
    if (c_tm->parsed()) train_models(tm, out);
    if (c_td->parsed()) train_denoiser_cmd(td, out);
    if (c_ta->parsed()) train_attack_net_cmd(ta, out);
    if (c_round->parsed()) run_round_cmd(ro, out);
    if (c_score->parsed()) score_cmd(score_outcomes, score_out, out);
    if (c_report->parsed()) report_cmd(report_round, report_out, out);
    if (c_print->parsed()) out << default_run_config().to_json().dump(2) << '\n';
    if (c_rs->parsed()) run_submission_cmd(rs, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace advarena::cli
