#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ticl/data/reference.hpp"
#include "ticl/data/table.hpp"
#include "ticl/eval/harness.hpp"
#include "ticl/train/trainer.hpp"
#include "ticl/trees/trees.hpp"

namespace ticl::meta {

/// Scores of every pre-training dataset (rows) on every evaluation dataset
/// (columns), row-major, with the metric used for each column.
struct TransferMatrix {
  std::vector<std::string> pretrain;
  std::vector<std::string> eval;
  std::vector<std::string> metric;
  std::vector<std::optional<double>> scores;

  const std::optional<double>& at(std::size_t p, std::size_t e) const { return scores[p * eval.size() + e]; }
  /// Throws DimensionError on shape mismatch and DataError when a name is
  /// both a pre-training and an evaluation dataset.
  void validate() const;
  /// Unweighted mean of each row's present scores.
  std::vector<std::optional<double>> mean_score() const;
};

/// Builds the matrix from results-file rows; a cell is the mean of its fold
/// values. Each eval column uses the first metric of `preference` recorded
/// for it (default: accuracy, then pearson).
TransferMatrix matrix_from_records(std::span<const eval::ResultRecord> records,
                                   std::span<const std::string> preference = {});

/// Same shape as the matrix; rank 1 is the best score, ties share the mean
/// rank, missing cells stay missing.
struct RankMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::optional<double>> ranks;

  const std::optional<double>& at(std::size_t p, std::size_t e) const { return ranks[p * cols + e]; }
  /// Mean rank of each pre-training dataset over its ranked columns.
  std::vector<std::optional<double>> average_rank() const;
};

/// Throws DataError when a column has no score.
RankMatrix rank_per_eval(const TransferMatrix& matrix);

struct RankPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double spearman = 0.0;
};

struct Histogram {
  /// 21 edges from -1 to 1 in steps of 0.1; the last bin includes 1.
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};

Histogram correlation_histogram(std::span<const double> values);

struct PairCorrelations {
  std::vector<RankPair> pairs;
  /// Pairs with fewer than two shared rows or a constant side.
  std::size_t skipped = 0;
  Histogram histogram;
};

/// Spearman correlation between the rank columns of every evaluation pair,
/// over the rows ranked in both.
PairCorrelations pairwise_rank_correlation(const RankMatrix& ranks);

struct DomainGrid {
  std::vector<data::Domain> train_domains;
  std::vector<data::Domain> eval_domains;
  /// train x eval mean rank; nullopt marks an empty cell.
  std::vector<std::optional<double>> mean_rank;
  std::vector<std::size_t> count;
};

/// Mean rank of domain-A pre-training datasets on domain-B evaluation
/// datasets. Domains are listed in their canonical order, present ones only.
DomainGrid domain_matrix(const RankMatrix& ranks, std::span<const data::Domain> train_domains,
                         std::span<const data::Domain> eval_domains);

struct MetaFeatures {
  std::string dataset;
  double n_features = 0;
  double n_instances = 0;
  double n_categorical = 0;
  double n_numeric = 0;
  double missing_fraction = 0;
  std::optional<double> final_cls_loss;
  std::optional<double> final_reg_loss;
};

/// Throws ConfigError when the checkpoint was trained on another table.
MetaFeatures extract_meta_features(const data::Table& table, const train::Checkpoint& checkpoint);

/// Design matrix for the meta-regressor.
struct MetaDataset {
  std::vector<std::string> names;
  std::vector<std::string> datasets;
  trees::Matrix x;
  std::vector<double> scores;
};

/// Seven meta-feature columns; a missing loss is imputed by the column mean
/// (0 when no dataset has one).
MetaDataset meta_dataset(std::span<const MetaFeatures> features, std::span<const double> scores);
/// n-instances and n-features, optionally followed by one indicator column
/// per domain present.
MetaDataset reference_dataset(std::span<const data::ReferenceRecord> records, bool domain_onehot);

struct MetaRegression {
  /// Held-out R^2; 0 with `degenerate` set when it is undefined.
  double r2 = 0.0;
  bool degenerate = false;
  std::vector<std::string> names;
  std::vector<double> importances;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
};

/// Boosted regressor on a seeded 80/20 split. Throws DataError below 10 rows.
MetaRegression fit_meta_regressor(const MetaDataset& data, std::uint64_t seed,
                                  const trees::BoostParams& params = {});

void write_pairs(const std::filesystem::path& path, const TransferMatrix& matrix, const PairCorrelations& pairs);
void write_histogram(const std::filesystem::path& path, const Histogram& histogram);
void write_domain_grid(const std::filesystem::path& path, const DomainGrid& grid);
void write_importances(const std::filesystem::path& path, const MetaRegression& regression);
void write_ranks(const std::filesystem::path& path, const TransferMatrix& matrix, const RankMatrix& ranks);

}  // namespace ticl::meta
