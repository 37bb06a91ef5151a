#include "ticl/experiment/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ticl/core/checksum.hpp"
#include "ticl/core/errors.hpp"
#include "ticl/data/reference.hpp"
#include "ticl/eval/metrics.hpp"
#include "ticl/meta/meta.hpp"
#include "ticl/tasks/task_space.hpp"
#include "ticl/train/config_io.hpp"

namespace ticl::experiment {
namespace {

using nlohmann::json;

// Results and log lines from concurrent grid points are written whole.
std::mutex g_results_mutex;
std::mutex g_log_mutex;

std::string hex16(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown " + what + " key '" + key + "'");
  }
}

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

SweepKind parse_sweep_kind(const std::string& name) {
  for (const auto k : {SweepKind::kNone, SweepKind::kTaskBudget, SweepKind::kAblation, SweepKind::kMatrix}) {
    if (sweep_name(k) == name) return k;
  }
  throw ConfigError("unknown sweep kind '" + name + "'");
}

eval::Baseline parse_baseline(const std::string& name) {
  if (name == "forest") return eval::Baseline::kForest;
  if (name == "linear") return eval::Baseline::kLinear;
  throw ConfigError("unknown baseline '" + name + "'");
}

/// Mean of the present values of one (pretrain, eval, metric) over folds.
std::optional<double> fold_mean(std::span<const eval::ResultRecord> records, const std::string& eval,
                                const std::string& metric) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.eval == eval && r.metric == metric && r.value) {
      sum += *r.value;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

struct Summary {
  std::optional<double> mean_auc;
  std::optional<double> mean_score;
};

/// Run-level summaries from one run's records.
Summary summarize(std::span<const eval::ResultRecord> records) {
  std::vector<std::string> evals;
  for (const auto& r : records) {
    if (std::find(evals.begin(), evals.end(), r.eval) == evals.end()) evals.push_back(r.eval);
  }
  double auc = 0, score = 0;
  std::size_t n_auc = 0, n_score = 0;
  for (const auto& e : evals) {
    if (const auto a = fold_mean(records, e, "auc-ovr")) {
      auc += *a;
      ++n_auc;
    }
    auto s = fold_mean(records, e, "accuracy");
    if (!s) s = fold_mean(records, e, "pearson");
    if (s) {
      score += *s;
      ++n_score;
    }
  }
  Summary out;
  if (n_auc) out.mean_auc = auc / static_cast<double>(n_auc);
  if (n_score) out.mean_score = score / static_cast<double>(n_score);
  return out;
}

std::string base_table(const std::string& label) { return label.substr(0, label.find('@')); }

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

std::string csv_safe(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '"'; }, ' ');
  return s;
}

}  // namespace

std::string_view sweep_name(SweepKind kind) {
  switch (kind) {
    case SweepKind::kNone: return "none";
    case SweepKind::kTaskBudget: return "task-budget";
    case SweepKind::kAblation: return "ablation";
    case SweepKind::kMatrix: return "matrix";
  }
  return "?";
}

std::vector<std::uint64_t> ExperimentConfig::run_seeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

void ExperimentConfig::validate(const data::Manifest& m) const {
  if (pretrain.empty()) throw ConfigError("experiment lists no pre-training table");
  for (const auto& p : pretrain) m.at(p);
  for (const auto& e : evals) {
    const auto& spec = m.at(e.name);
    if (!e.target && !spec.target) throw ConfigError("evaluation table '" + e.name + "' has no target");
    if (std::find(pretrain.begin(), pretrain.end(), e.name) != pretrain.end()) {
      throw ConfigError("'" + e.name + "' is both a pre-training and an evaluation table");
    }
  }
  model.validate();
  train.validate();
  protocol.validate();
  switch (sweep.kind) {
    case SweepKind::kTaskBudget:
      if (sweep.budgets.empty()) throw ConfigError("task-budget sweep needs budgets");
      for (const auto b : sweep.budgets) {
        if (b == 0) throw ConfigError("task budgets must be positive");
      }
      break;
    case SweepKind::kAblation:
      if (sweep.axes.empty() || sweep.fractions.empty()) throw ConfigError("ablation sweep needs axes and fractions");
      for (const double f : sweep.fractions) {
        if (!(f >= 0 && f < 1)) throw ConfigError("ablation fractions must lie in [0, 1)");
      }
      break;
    case SweepKind::kMatrix:
      if (evals.empty()) throw ConfigError("matrix sweep needs evaluation tables");
      break;
    case SweepKind::kNone: break;
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["pretrain"] = pretrain;
  json ev = json::array();
  for (const auto& e : evals) {
    json one{{"name", e.name}};
    if (e.target) one["target"] = *e.target;
    ev.push_back(one);
  }
  j["eval"] = ev;
  j["model"] = model;
  j["train"] = train;
  j["protocol"] = {{"context_fraction", protocol.context_fraction}, {"folds", protocol.folds}, {"k", protocol.k}};
  json bl = json::array();
  for (const auto b : baselines) bl.push_back(std::string(eval::baseline_name(b)));
  j["baselines"] = bl;
  json sw{{"kind", std::string(sweep_name(sweep.kind))}};
  if (!sweep.budgets.empty()) sw["budgets"] = sweep.budgets;
  if (!sweep.axes.empty()) {
    json axes = json::array();
    for (const auto a : sweep.axes) axes.push_back(std::string(tasks::axis_name(a)));
    sw["axes"] = axes;
  }
  if (!sweep.fractions.empty()) sw["fractions"] = sweep.fractions;
  j["sweep"] = sw;
  j["seeds"] = seeds;
  j["seed"] = seed;
  return j;
}

std::string ExperimentConfig::hash() const { return hex16(core::fnv1a64(to_json().dump())); }

ExperimentConfig parse_experiment(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j,
                 {"manifest", "pretrain", "eval", "model", "train", "protocol", "baselines", "sweep", "seeds", "seed",
                  "output"},
                 "experiment");
  ExperimentConfig c;
  c.manifest = j.contains("manifest") ? (base_dir / get<std::string>(j, "manifest")).lexically_normal()
                                      : data::default_data_dir() / "manifest.json";
  if (!j.contains("pretrain")) throw ConfigError("experiment needs a 'pretrain' list");
  c.pretrain = j.at("pretrain").is_string() ? std::vector<std::string>{get<std::string>(j, "pretrain")}
                                            : get<std::vector<std::string>>(j, "pretrain");
  if (j.contains("eval")) {
    for (const auto& e : j.at("eval")) {
      if (e.is_string()) {
        c.evals.push_back({e.get<std::string>(), std::nullopt});
      } else {
        reject_unknown(e, {"name", "target"}, "eval");
        EvalTarget t{get<std::string>(e, "name"), std::nullopt};
        if (e.contains("target")) t.target = get<std::string>(e, "target");
        c.evals.push_back(std::move(t));
      }
    }
  }
  if (j.contains("model")) c.model = j.at("model").get<model::ModelConfig>();
  if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    reject_unknown(p, {"context_fraction", "folds", "k"}, "protocol");
    if (p.contains("context_fraction")) c.protocol.context_fraction = get<double>(p, "context_fraction");
    if (p.contains("folds")) c.protocol.folds = get<std::size_t>(p, "folds");
    if (p.contains("k")) c.protocol.k = get<std::size_t>(p, "k");
  }
  if (j.contains("baselines")) {
    for (const auto& b : get<std::vector<std::string>>(j, "baselines")) c.baselines.push_back(parse_baseline(b));
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown(s, {"kind", "budgets", "axes", "fractions"}, "sweep");
    c.sweep.kind = parse_sweep_kind(get<std::string>(s, "kind"));
    if (s.contains("budgets")) c.sweep.budgets = get<std::vector<std::uint64_t>>(s, "budgets");
    if (s.contains("axes")) {
      for (const auto& a : get<std::vector<std::string>>(s, "axes")) c.sweep.axes.push_back(tasks::parse_axis(a));
    }
    if (s.contains("fractions")) c.sweep.fractions = get<std::vector<double>>(s, "fractions");
  }
  if (j.contains("seeds")) c.seeds = get<std::vector<std::uint64_t>>(j, "seeds");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
  c.output = (base_dir / (j.contains("output") ? get<std::string>(j, "output") : "runs")).lexically_normal();
  c.train.seed = c.seed;
  c.protocol.seed = c.seed;
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read experiment config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment(j, path.parent_path());
}

std::string RunSpec::label(SweepKind kind) const {
  if (kind == SweepKind::kTaskBudget) return table + "@budget=" + std::to_string(train.budget);
  if (axis && fraction > 0) return table + "@" + std::string(tasks::axis_name(*axis)) + "=" + fmt(fraction);
  return table;
}

std::string RunSpec::hash() const {
  json j{{"table", table}, {"model", model}, {"train", train}, {"fraction", fraction}};
  j["axis"] = axis ? std::string(tasks::axis_name(*axis)) : "none";
  return hex16(core::fnv1a64(j.dump()));
}

RunArtifacts run_artifacts(const std::filesystem::path& output, const RunSpec& spec) {
  RunArtifacts a;
  a.dir = output / "runs" / (spec.table + "-" + spec.hash());
  a.checkpoint = a.dir / "checkpoint.ticl";
  a.trace = a.dir / "trace.csv";
  a.tasks = a.dir / "tasks.csv";
  return a;
}

std::filesystem::path results_path(const std::filesystem::path& output) { return output / "results.csv"; }

std::filesystem::path resolve_output(const ExperimentConfig& config,
                                     const std::optional<std::filesystem::path>& override_dir) {
  if (override_dir) return *override_dir;
  if (const char* env = std::getenv("TICL_OUTPUT_ROOT"); env && *env) return env;
  return config.output;
}

Runner::Runner(ExperimentConfig config, std::filesystem::path output, Hooks hooks)
    : config_(std::move(config)),
      output_(std::move(output)),
      hooks_(std::move(hooks)),
      manifest_(data::Manifest::load(config_.manifest)) {
  config_.validate(manifest_);
}

void Runner::log(const std::string& line) const {
  if (!hooks_.log) return;
  std::lock_guard lock(g_log_mutex);
  hooks_.log(line);
}

std::vector<RunSpec> Runner::base_runs() const {
  std::vector<RunSpec> runs;
  for (const auto& table : config_.pretrain) {
    for (const auto seed : config_.run_seeds()) {
      RunSpec s{table, std::nullopt, 0.0, config_.model, config_.train};
      s.train.seed = seed;
      runs.push_back(s);
    }
  }
  return runs;
}

std::vector<RunSpec> Runner::sweep_runs() const {
  const auto base = base_runs();
  std::vector<RunSpec> out;
  std::set<std::string> seen;
  auto add = [&](RunSpec s) {
    if (seen.insert(s.hash()).second) out.push_back(std::move(s));
  };
  switch (config_.sweep.kind) {
    case SweepKind::kTaskBudget:
      for (const auto budget : config_.sweep.budgets) {
        for (auto s : base) {
          s.train.budget = budget;
          add(s);
        }
      }
      break;
    case SweepKind::kAblation:
      for (const auto axis : config_.sweep.axes) {
        for (const double f : config_.sweep.fractions) {
          for (auto s : base) {
            // The unablated run is shared by both axes.
            if (f > 0) s.axis = axis;
            s.fraction = f;
            add(s);
          }
        }
      }
      break;
    case SweepKind::kMatrix:
    case SweepKind::kNone:
      for (const auto& s : base) add(s);
      break;
  }
  return out;
}

data::Table Runner::pretrain_table(const RunSpec& spec) const {
  auto table = manifest_.load_table(spec.table);
  if (spec.axis && spec.fraction > 0) table = tasks::ablate_table(table, *spec.axis, spec.fraction, spec.train.seed);
  return table;
}

std::pair<data::Table, std::size_t> Runner::eval_table(const EvalTarget& target) const {
  auto table = manifest_.load_table(target.name);
  const auto& spec = manifest_.at(target.name);
  const auto column = target.target ? *target.target : *spec.target;
  const auto index = table.column_index(column);
  return {std::move(table), index};
}

RunArtifacts Runner::pretrain(const RunSpec& spec) const {
  const auto art = run_artifacts(output_, spec);
  if (std::filesystem::exists(art.checkpoint)) {
    train::load_checkpoint(art.checkpoint);  // verifies the checksum
    log("reuse " + art.dir.string());
    return art;
  }
  const auto table = pretrain_table(spec);
  const auto space = tasks::build_task_space(table, spec.train.budget, spec.train.seed);
  auto partial = art.dir;
  partial += ".partial";
  std::filesystem::remove_all(partial);
  std::filesystem::create_directories(partial);
  try {
    {
      std::ofstream tasks(partial / "tasks.csv", std::ios::binary);
      tasks << "index,target,head,features\n";
      for (std::size_t i = 0; i < space.tasks.size(); ++i) {
        const auto& t = space.tasks[i];
        tasks << i << ',' << csv_safe(table.column(t.target).name) << ',' << tasks::head_name(t.head) << ',';
        bool first = true;
        for (std::size_t c = 0; c < table.column_count(); ++c) {
          if (!t.features.test(c)) continue;
          tasks << (first ? "" : "|") << csv_safe(table.column(c).name);
          first = false;
        }
        tasks << '\n';
      }
      if (!tasks) throw Error("failed writing task log");
    }
    std::ofstream(partial / "run.json") << json{{"table", spec.table},
                                                {"axis", spec.axis ? std::string(tasks::axis_name(*spec.axis)) : "none"},
                                                {"fraction", spec.fraction},
                                                {"model", spec.model},
                                                {"train", spec.train},
                                                {"run_hash", spec.hash()},
                                                {"config_hash", config_.hash()},
                                                {"tasks", space.tasks.size()}}
                                                .dump(2)
                                         << '\n';
    log("pretrain " + spec.table + " (" + std::to_string(space.tasks.size()) + " tasks, " +
        std::to_string(spec.train.steps) + " steps, seed " + std::to_string(spec.train.seed) + ")");
    train::TrainHooks th;
    const std::size_t every = std::max<std::size_t>(1, spec.train.steps / 10);
    th.on_step = [&](const train::TraceRow& row) {
      if ((row.step + 1) % every == 0) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << "  step " << row.step + 1 << "/" << spec.train.steps << " cls ";
        row.cls_loss ? s << *row.cls_loss : s << '-';
        s << " reg ";
        row.reg_loss ? s << *row.reg_loss : s << '-';
        log(s.str());
      }
    };
    auto result = train::pretrain(table, space, spec.model, spec.train, th);
    result.checkpoint.table = spec.table;
    train::save_checkpoint(result.checkpoint, partial / "checkpoint.ticl");
    train::write_trace(result.trace, partial / "trace.csv");
    std::filesystem::remove_all(art.dir);
    std::filesystem::rename(partial, art.dir);
  } catch (...) {
    std::filesystem::remove_all(partial);
    throw;
  }
  return art;
}

std::vector<eval::ResultRecord> Runner::evaluate(const RunSpec& spec, SweepKind label_kind) const {
  const auto art = run_artifacts(output_, spec);
  if (!std::filesystem::exists(art.checkpoint)) {
    throw ConfigError("no checkpoint for " + spec.table + " at " + art.checkpoint.string() + " (run pretrain first)");
  }
  const auto ckpt = train::load_checkpoint(art.checkpoint);
  train::require_compatible(ckpt, spec.model);
  if (ckpt.table != spec.table) {
    throw ConfigError("checkpoint " + art.checkpoint.string() + " was trained on '" + ckpt.table + "'");
  }
  const auto label = spec.label(label_kind);
  std::vector<eval::ResultRecord> records;
  for (const auto& target : config_.evals) {
    if (target.name == spec.table) {
      throw ConfigError("refusing to evaluate on the pre-training table '" + target.name + "'");
    }
    const auto [table, column] = eval_table(target);
    const auto ev = hooks_.predictor
                        ? eval::run_icl(table, column, config_.protocol, ckpt.model.max_features, hooks_.predictor)
                        : eval::run_model(ckpt.weights, table, column, config_.protocol);
    const auto results = eval::score(ev, target.name, label);
    const auto rows = eval::to_records(results, spec.train.seed, config_.hash());
    records.insert(records.end(), rows.begin(), rows.end());
    log("  " + label + " on " + target.name + ": " + std::string(eval::metric_name(results[0].metric)) + " " +
        opt(results[0].mean()) + ", " + std::string(eval::metric_name(results[1].metric)) + " " +
        opt(results[1].mean()));
  }
  std::lock_guard lock(g_results_mutex);
  eval::append_results(results_path(output_), records);
  return records;
}

std::vector<eval::ResultRecord> Runner::evaluate_baselines() const {
  std::vector<eval::ResultRecord> records;
  for (const auto baseline : config_.baselines) {
    const auto label = "baseline-" + std::string(eval::baseline_name(baseline));
    for (const auto& target : config_.evals) {
      const auto [table, column] = eval_table(target);
      const auto results = eval::score(eval::run_baseline(baseline, table, column, config_.protocol), target.name, label);
      const auto rows = eval::to_records(results, config_.seed, config_.hash());
      records.insert(records.end(), rows.begin(), rows.end());
    }
  }
  std::lock_guard lock(g_results_mutex);
  eval::append_results(results_path(output_), records);
  return records;
}

std::vector<Runner::GridPoint> Runner::sweep(std::size_t jobs) const {
  const auto runs = sweep_runs();
  const auto kind = config_.sweep.kind;
  std::vector<GridPoint> points(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      auto& p = points[i];
      p.spec = runs[i];
      p.label = runs[i].label(kind);
      try {
        pretrain(p.spec);
        const auto records = evaluate(p.spec, kind);
        const auto s = summarize(records);
        p.mean_auc = s.mean_auc;
        p.mean_score = s.mean_score;
        p.ok = true;
      } catch (const std::exception& e) {
        p.message = e.what();
        log("FAILED " + p.label + ": " + p.message);
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, runs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::filesystem::create_directories(output_);
  std::ofstream out(output_ / ("sweep-" + config_.hash() + ".csv"), std::ios::binary | std::ios::trunc);
  out << kSweepHeader << '\n';
  for (const auto& p : points) {
    out << sweep_name(kind) << ',' << p.label << ',' << p.spec.train.seed << ',' << (p.ok ? "ok" : "failed") << ','
        << p.spec.hash() << ',' << config_.hash() << ',' << opt(p.mean_auc) << ',' << opt(p.mean_score) << ','
        << csv_safe(p.message) << '\n';
  }
  return points;
}

std::vector<std::filesystem::path> report(const std::filesystem::path& output, const data::Manifest& manifest,
                                          bool force) {
  const auto path = results_path(output);
  if (!std::filesystem::exists(path)) throw DataError("no results file at " + path.string());
  const auto all = eval::read_results(path);
  if (all.empty()) throw DataError(path.string() + " holds no results");
  std::set<std::string> hashes;
  for (const auto& r : all) hashes.insert(r.config_hash);
  if (hashes.size() > 1 && !force) {
    throw ConfigError(path.string() + " mixes " + std::to_string(hashes.size()) +
                      " config hashes (pass --force to analyse them together)");
  }
  std::vector<eval::ResultRecord> icl;
  for (const auto& r : all) {
    if (r.pretrain.rfind("baseline-", 0) != 0) icl.push_back(r);
  }
  const auto dir = output / "report";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  json notes = json::object();
  notes["config_hashes"] = hashes;
  if (icl.empty()) throw DataError(path.string() + " holds only baseline rows");

  const auto matrix = meta::matrix_from_records(icl);
  const auto ranks = meta::rank_per_eval(matrix);
  meta::write_ranks(dir / "ranks.csv", matrix, ranks);
  written.push_back(dir / "ranks.csv");

  const auto pairs_path = dir / "spearman_pairs.csv";
  if (matrix.eval.size() >= 2 && matrix.pretrain.size() >= 2) {
    const auto pairs = meta::pairwise_rank_correlation(ranks);
    meta::write_pairs(pairs_path, matrix, pairs);
    meta::write_histogram(dir / "spearman_histogram.csv", pairs.histogram);
    written.push_back(dir / "spearman_histogram.csv");
    notes["spearman_pairs"] = pairs.pairs.size();
    notes["spearman_skipped"] = pairs.skipped;
  } else {
    std::ofstream out(pairs_path, std::ios::binary | std::ios::trunc);
    out << "# no pairs: rank correlations need at least two evaluation and two pre-training datasets\n"
        << "eval_a,eval_b,spearman\n";
    notes["spearman_pairs"] = 0;
  }
  written.push_back(pairs_path);

  std::vector<data::Domain> train_domains, eval_domains;
  for (const auto& p : matrix.pretrain) train_domains.push_back(manifest.at(base_table(p)).domain);
  for (const auto& e : matrix.eval) eval_domains.push_back(manifest.at(e).domain);
  meta::write_domain_grid(dir / "domain_matrix.csv", meta::domain_matrix(ranks, train_domains, eval_domains));
  written.push_back(dir / "domain_matrix.csv");

  // Meta-features from every run directory whose label appears in the matrix.
  std::map<std::string, std::vector<train::Checkpoint>> checkpoints;
  if (std::filesystem::exists(output / "runs")) {
    for (const auto& entry : std::filesystem::directory_iterator(output / "runs")) {
      const auto ck = entry.path() / "checkpoint.ticl";
      const auto run = entry.path() / "run.json";
      if (!std::filesystem::exists(ck) || !std::filesystem::exists(run)) continue;
      std::ifstream in(run);
      const auto j = json::parse(in);
      RunSpec spec{j.at("table").get<std::string>(), std::nullopt, j.at("fraction").get<double>(),
                   j.at("model").get<model::ModelConfig>(), j.at("train").get<train::TrainConfig>()};
      if (j.at("axis").get<std::string>() != "none") spec.axis = tasks::parse_axis(j.at("axis").get<std::string>());
      for (const auto kind : {SweepKind::kNone, SweepKind::kTaskBudget}) {
        const auto label = spec.label(kind);
        if (std::find(matrix.pretrain.begin(), matrix.pretrain.end(), label) != matrix.pretrain.end()) {
          checkpoints[label].push_back(train::load_checkpoint(ck));
        }
      }
    }
  }
  std::vector<meta::MetaFeatures> features;
  std::vector<double> scores;
  const auto mean_scores = matrix.mean_score();
  for (std::size_t p = 0; p < matrix.pretrain.size(); ++p) {
    const auto it = checkpoints.find(matrix.pretrain[p]);
    if (it == checkpoints.end() || !mean_scores[p]) continue;
    const auto table = manifest.load_table(base_table(matrix.pretrain[p]));
    auto f = meta::extract_meta_features(table, it->second.front());
    // Average the losses over seeds.
    auto average = [&](auto field) -> std::optional<double> {
      double sum = 0;
      std::size_t n = 0;
      for (const auto& c : it->second) {
        if (const auto& v = c.*field) {
          sum += *v;
          ++n;
        }
      }
      if (n == 0) return std::nullopt;
      return sum / static_cast<double>(n);
    };
    f.final_cls_loss = average(&train::Checkpoint::final_cls_loss);
    f.final_reg_loss = average(&train::Checkpoint::final_reg_loss);
    f.dataset = matrix.pretrain[p];
    features.push_back(f);
    scores.push_back(*mean_scores[p]);
  }
  {
    std::ofstream out(dir / "meta_features.csv", std::ios::binary | std::ios::trunc);
    out << "pretrain,n_features,n_instances,n_categorical,n_numeric,missing_fraction,final_cls_loss,final_reg_loss,"
           "mean_score\n";
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto& f = features[i];
      out << f.dataset << ',' << fmt(f.n_features) << ',' << fmt(f.n_instances) << ',' << fmt(f.n_categorical) << ','
          << fmt(f.n_numeric) << ',' << fmt(f.missing_fraction) << ',' << opt(f.final_cls_loss) << ','
          << opt(f.final_reg_loss) << ',' << fmt(scores[i]) << '\n';
    }
    written.push_back(dir / "meta_features.csv");
  }
  if (features.size() >= 10) {
    const auto fit = meta::fit_meta_regressor(meta::meta_dataset(features, scores), 0);
    meta::write_importances(dir / "meta_importance.csv", fit);
    written.push_back(dir / "meta_importance.csv");
    notes["meta_r2"] = fit.r2;
    notes["meta_degenerate"] = fit.degenerate;
  } else {
    notes["meta_regressor"] = "skipped: " + std::to_string(features.size()) + " pre-training datasets (needs 10)";
  }

  // Budget and ablation curves: per seed, the mean over evals of the
  // fold-mean AUC; then mean and sample sd over seeds. Unsuffixed runs are
  // the unablated point of the ablation curve.
  std::map<std::string, std::map<std::uint64_t, std::vector<eval::ResultRecord>>> grouped;
  for (const auto& r : icl) grouped[r.pretrain][r.seed].push_back(r);
  std::ofstream budget(dir / "budget_vs_score.csv", std::ios::binary | std::ios::trunc);
  std::ofstream ablation(dir / "ablation_vs_score.csv", std::ios::binary | std::ios::trunc);
  budget << "pretrain,budget,seeds,mean_auc,sd_auc,mean_score\n";
  ablation << "pretrain,axis,fraction,seeds,mean_auc,sd_auc,mean_score\n";
  std::vector<std::pair<std::uint64_t, std::string>> budget_rows;
  for (const auto& [label, by_seed] : grouped) {
    std::vector<double> aucs, sc;
    for (const auto& [seed, recs] : by_seed) {
      const auto s = summarize(recs);
      if (s.mean_auc) aucs.push_back(*s.mean_auc);
      if (s.mean_score) sc.push_back(*s.mean_score);
    }
    auto mean = [](const std::vector<double>& v) -> std::optional<double> {
      if (v.empty()) return std::nullopt;
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    std::optional<double> sd;
    if (aucs.size() >= 2) {
      const double m = *mean(aucs);
      double ss = 0;
      for (const double a : aucs) ss += (a - m) * (a - m);
      sd = std::sqrt(ss / static_cast<double>(aucs.size() - 1));
    }
    const auto stats = std::to_string(by_seed.size()) + ',' + opt(mean(aucs)) + ',' + opt(sd) + ',' + opt(mean(sc));
    const auto at = label.find('@');
    const auto eq = label.find('=', at == std::string::npos ? 0 : at);
    if (at == std::string::npos) {
      ablation << label << ",none,0," << stats << '\n';
    } else if (label.compare(at + 1, 7, "budget=") == 0) {
      const auto n = std::stoull(label.substr(eq + 1));
      budget_rows.emplace_back(n, base_table(label) + ',' + std::to_string(n) + ',' + stats);
    } else {
      ablation << base_table(label) << ',' << label.substr(at + 1, eq - at - 1) << ',' << label.substr(eq + 1) << ','
               << stats << '\n';
    }
  }
  std::sort(budget_rows.begin(), budget_rows.end());
  for (const auto& [n, row] : budget_rows) budget << row << '\n';
  written.push_back(dir / "budget_vs_score.csv");
  written.push_back(dir / "ablation_vs_score.csv");

  // Published values kept for side-by-side reading; they come from a far
  // larger pre-training corpus and are not targets.
  notes["published_reference"] = {{"meta_regressor_r2", 0.67}, {"best_single_table_auc_cc18", 0.916}};
  std::ofstream(dir / "report.json") << notes.dump(2) << '\n';
  written.push_back(dir / "report.json");
  return written;
}

std::vector<std::filesystem::path> reference_report(const std::filesystem::path& output, std::uint64_t seed) {
  const auto dir = output / "report";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::ofstream summary(dir / "reference_summary.csv", std::ios::binary | std::ios::trunc);
  summary << "benchmark,records,spearman_features,spearman_instances,meta_r2,degenerate,top_feature\n";
  for (const auto bench : {data::Benchmark::kCc18, data::Benchmark::kCtr23}) {
    const auto records = data::reference_records(bench);
    std::vector<double> nf, ni, s;
    for (const auto& r : records) {
      nf.push_back(static_cast<double>(r.features));
      ni.push_back(static_cast<double>(r.instances));
      s.push_back(r.score);
    }
    const auto fit = meta::fit_meta_regressor(meta::reference_dataset(records, true), seed);
    const auto name = std::string(data::benchmark_name(bench));
    const auto imp = dir / ("reference_importance_" + name + ".csv");
    meta::write_importances(imp, fit);
    written.push_back(imp);
    const auto top = std::max_element(fit.importances.begin(), fit.importances.end()) - fit.importances.begin();
    summary << name << ',' << records.size() << ',' << opt(eval::spearman(nf, s)) << ','
            << opt(eval::spearman(ni, s)) << ',' << fmt(fit.r2) << ',' << (fit.degenerate ? "yes" : "no") << ','
            << fit.names[static_cast<std::size_t>(top)] << '\n';
  }
  written.push_back(dir / "reference_summary.csv");
  return written;
}

}  // namespace ticl::experiment
