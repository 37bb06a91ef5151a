#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ticl/data/table.hpp"
#include "ticl/model/model.hpp"
#include "ticl/tasks/task.hpp"
#include "ticl/train/trainer.hpp"

namespace ticl::eval {

enum class MetricKind { kAccuracy, kAucOvr, kR2, kPearson, kSpearman };

std::string_view metric_name(MetricKind metric);
/// Throws ConfigError for unknown names.
MetricKind parse_metric(std::string_view name);

struct EvalProtocol {
  /// Share of the usable rows forming the context pool; the rest are queries.
  double context_fraction = 0.8;
  std::size_t folds = 3;
  /// Retrieved context rows per query, clipped to the pool size.
  std::size_t k = 96;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless 0 < context_fraction < 1, folds >= 1, k >= 1.
  void validate() const;
};

/// One repeated-holdout split of the rows with an observed target.
struct Fold {
  std::uint64_t seed = 0;
  std::vector<std::size_t> context;
  std::vector<std::size_t> query;
};

/// Seeded splits shared by every evaluator of the same (table, target,
/// protocol). Throws DataError if the target is all-missing or too few rows
/// are left for both sides.
std::vector<Fold> make_folds(const data::Table& table, std::size_t target, const EvalProtocol& protocol);

/// Head implied by the target column kind.
tasks::HeadKind eval_head(const data::Column& target);

/// Non-target columns, reduced to a seeded sorted subset of `limit` columns
/// when there are more (limit 0 keeps all).
std::vector<std::size_t> eval_features(const data::Table& table, std::size_t target, std::size_t limit,
                                       std::uint64_t seed);

/// Indices of the k pool rows nearest to `query` (Euclidean), nearest first,
/// ties to the lower index. Rows are row-major with `cols` values each.
std::vector<std::size_t> retrieve_context(std::span<const double> pool, std::size_t cols,
                                          std::span<const double> query, std::size_t k);

/// Z-scores rows with the mean and population std of `reference` (NaN-aware);
/// missing cells and constant columns become 0.
struct ZScore {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static ZScore fit(std::span<const double> reference, std::size_t cols);
  std::vector<double> apply(std::span<const double> rows) const;
};

/// Raw predictions for one fold: rows x width outputs (probabilities in
/// source-class order, or one value per row) and the true targets.
struct FoldOutput {
  std::vector<double> outputs;
  std::vector<double> truth;
};

struct Evaluation {
  tasks::HeadKind head = tasks::HeadKind::kClassification;
  /// Output columns per row: class count, or 1 for regression.
  std::size_t width = 1;
  std::vector<FoldOutput> folds;
};

struct EvalResult {
  std::string eval_table;
  std::string pretrain_table;
  MetricKind metric = MetricKind::kAccuracy;
  std::vector<std::optional<double>> folds;

  /// Mean of the folds that have a value; nullopt if none has.
  std::optional<double> mean() const;
};

/// Classification: accuracy and auc-ovr. Regression: r2, pearson, spearman.
std::vector<EvalResult> score(const Evaluation& evaluation, const std::string& eval_table,
                              const std::string& pretrain_table);

/// Prediction for one query row (index into the table) given its
/// retrieved context.
using QueryPredictor = std::function<std::vector<double>(const model::DownstreamQuery&, std::size_t row)>;

/// In-context evaluation loop: each query gets its k nearest pool rows as
/// context, with features limited to `max_features` (0 = all). Constant
/// retrieved regression targets predict that constant.
Evaluation run_icl(const data::Table& table, std::size_t target, const EvalProtocol& protocol,
                   std::size_t max_features, const QueryPredictor& predict);

/// run_icl with frozen model weights.
Evaluation run_model(const model::Weights<float>& weights, const data::Table& table, std::size_t target,
                     const EvalProtocol& protocol);

std::vector<EvalResult> evaluate(const train::Checkpoint& checkpoint, const data::Table& table,
                                 std::size_t target, const EvalProtocol& protocol);

enum class Baseline { kForest, kLinear };

std::string_view baseline_name(Baseline baseline);

/// Baseline fitted on the whole context pool of each fold (pool-mean
/// imputation, pool standardization). kLinear is logistic regression for
/// classification and ridge for regression.
Evaluation run_baseline(Baseline baseline, const data::Table& table, std::size_t target,
                        const EvalProtocol& protocol);

struct NullSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t permutations = 0;
};

/// AUC (mean over folds) after shuffling each fold's truth, summarized over
/// `permutations` draws. Classification only.
NullSummary permutation_null(const Evaluation& evaluation, std::size_t permutations, std::uint64_t seed);

/// One line of the results file: one metric on one fold.
struct ResultRecord {
  std::string pretrain;
  std::string eval;
  std::string metric;
  std::size_t fold = 0;
  std::optional<double> value;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline constexpr std::string_view kResultsHeader = "pretrain,eval,metric,fold,value,seed,config_hash";

std::vector<ResultRecord> to_records(std::span<const EvalResult> results, std::uint64_t seed,
                                     const std::string& config_hash);
/// Appends records, writing the header first when the file is new or empty.
/// Missing values are written as NA.
void append_results(const std::filesystem::path& path, std::span<const ResultRecord> records);
/// Throws FormatError on a wrong header or malformed line.
std::vector<ResultRecord> read_results(const std::filesystem::path& path);

}  // namespace ticl::eval
