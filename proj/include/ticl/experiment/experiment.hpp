#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ticl/data/manifest.hpp"
#include "ticl/eval/harness.hpp"
#include "ticl/model/model.hpp"
#include "ticl/tasks/ablation.hpp"
#include "ticl/train/trainer.hpp"

namespace ticl::experiment {

/// Evaluation table with an optional target override (default: the
/// manifest's target for that table).
struct EvalTarget {
  std::string name;
  std::optional<std::string> target;
};

enum class SweepKind { kNone, kTaskBudget, kAblation, kMatrix };

std::string_view sweep_name(SweepKind kind);

struct SweepConfig {
  SweepKind kind = SweepKind::kNone;
  std::vector<std::uint64_t> budgets;
  std::vector<tasks::AblationAxis> axes;
  std::vector<double> fractions;
};

/// One experiment file. JSON schema (every block optional except
/// "pretrain"):
///
///   {"manifest": "path/to/manifest.json",        // default: bundled data
///    "pretrain": ["mexico"],
///    "eval": ["wine", {"name": "pima", "target": "type"}],
///    "model": {...}, "train": {...},             // ModelConfig / TrainConfig
///    "protocol": {"context_fraction": 0.8, "folds": 3, "k": 96},
///    "baselines": ["forest", "linear"],
///    "sweep": {"kind": "task-budget", "budgets": [5, 50, 500]}
///           | {"kind": "ablation", "axes": ["rows", "columns"], "fractions": [0, 0.7]}
///           | {"kind": "matrix"},
///    "seeds": [0, 1, 2],                         // pre-training seeds
///    "seed": 0,                                  // global seed (folds, task lists)
///    "output": "runs"}
struct ExperimentConfig {
  std::filesystem::path manifest;
  std::vector<std::string> pretrain;
  std::vector<EvalTarget> evals;
  model::ModelConfig model;
  train::TrainConfig train;
  eval::EvalProtocol protocol;
  std::vector<eval::Baseline> baselines;
  SweepConfig sweep;
  std::vector<std::uint64_t> seeds;
  std::uint64_t seed = 0;
  std::filesystem::path output = "runs";

  /// Pre-training seeds: `seeds` if given, else the global seed.
  std::vector<std::uint64_t> run_seeds() const;
  /// Throws ConfigError for unknown datasets, empty grids, or an evaluation
  /// table that is also a pre-training table.
  void validate(const data::Manifest& manifest) const;
  /// 16 hex digits of FNV-1a over the canonical JSON form.
  std::string hash() const;
  nlohmann::json to_json() const;
};

/// Relative paths in the file resolve against `base_dir`.
ExperimentConfig parse_experiment(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// One pre-training run: table, optional ablation, model and training config.
struct RunSpec {
  std::string table;
  std::optional<tasks::AblationAxis> axis;
  double fraction = 0.0;
  model::ModelConfig model;
  /// train.seed also seeds the task list and the ablation draw.
  train::TrainConfig train;

  /// Name used as the pre-training column in results, e.g. "mexico",
  /// "mexico@budget=50", "mexico@columns=0.7".
  std::string label(SweepKind kind) const;
  std::string hash() const;
};

struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path checkpoint;
  std::filesystem::path trace;
  std::filesystem::path tasks;
};

/// Artifact layout: <output>/runs/<table>-<run hash>/{checkpoint.ticl,
/// trace.csv, tasks.csv}; results in <output>/results.csv.
RunArtifacts run_artifacts(const std::filesystem::path& output, const RunSpec& spec);
std::filesystem::path results_path(const std::filesystem::path& output);

/// Output root: the explicit override, else $TICL_OUTPUT_ROOT, else the
/// config's own directory.
std::filesystem::path resolve_output(const ExperimentConfig& config,
                                     const std::optional<std::filesystem::path>& override_dir);

struct Hooks {
  /// Replaces the model in the in-context evaluation loop when set.
  eval::QueryPredictor predictor;
  std::function<void(const std::string&)> log;
};

class Runner {
 public:
  Runner(ExperimentConfig config, std::filesystem::path output, Hooks hooks = {});

  const ExperimentConfig& config() const { return config_; }
  const data::Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& output() const { return output_; }

  /// Pre-training runs implied by the config (before any sweep expansion).
  std::vector<RunSpec> base_runs() const;
  /// Every grid point of the sweep block (base runs when there is none).
  std::vector<RunSpec> sweep_runs() const;

  /// Trains and writes the artifacts, reusing an existing checkpoint. On
  /// failure the partial run directory is removed.
  RunArtifacts pretrain(const RunSpec& spec) const;
  /// Evaluates a finished run on every eval table and appends the rows.
  /// Refuses evaluation tables that are the pre-training table.
  std::vector<eval::ResultRecord> evaluate(const RunSpec& spec, SweepKind label_kind) const;
  /// Baseline rows for every eval table (pretrain column
  /// "baseline-<name>"), appended once per call.
  std::vector<eval::ResultRecord> evaluate_baselines() const;

  struct GridPoint {
    RunSpec spec;
    std::string label;
    bool ok = false;
    std::string message;
    /// Mean over classification evals of the fold-mean auc-ovr.
    std::optional<double> mean_auc;
    /// Mean over evals of accuracy (classification) or pearson (regression).
    std::optional<double> mean_score;
  };

  /// Runs pretrain + evaluate per grid point with up to `jobs` threads,
  /// writes <output>/sweep-<config hash>.csv and returns the points. Failures
  /// are recorded, not thrown.
  std::vector<GridPoint> sweep(std::size_t jobs) const;

 private:
  void log(const std::string& line) const;
  data::Table pretrain_table(const RunSpec& spec) const;
  std::pair<data::Table, std::size_t> eval_table(const EvalTarget& target) const;

  ExperimentConfig config_;
  std::filesystem::path output_;
  Hooks hooks_;
  data::Manifest manifest_;
};

inline constexpr std::string_view kSweepHeader =
    "kind,label,seed,status,run_hash,config_hash,mean_auc,mean_score,message";

/// Analysis artifacts for the results under `output` (see README): ranks,
/// Spearman pairs and histogram, domain matrix, meta-feature importances,
/// budget-vs-score. Throws DataError on empty results and ConfigError when
/// rows carry different config hashes unless `force`.
std::vector<std::filesystem::path> report(const std::filesystem::path& output, const data::Manifest& manifest,
                                          bool force);

/// Analysis of the bundled published tables (no training): correlation of
/// feature count with score and meta-regressor importances.
std::vector<std::filesystem::path> reference_report(const std::filesystem::path& output, std::uint64_t seed);

}  // namespace ticl::experiment
