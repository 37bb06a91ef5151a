#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ticl/core/rng.hpp"
#include "ticl/tasks/task.hpp"

namespace ticl::tasks {

struct EpisodeConfig {
  std::size_t context = 128;
  std::size_t query = 32;
  std::size_t max_features = 32;
  std::size_t max_classes = 10;
};

/// One preprocessed (context, query) instance of a task. Matrices are
/// row-major with `max_features` columns; columns at and beyond
/// `active_features` are zero. Class targets are dense codes in
/// [0, classes) ordered by context frequency.
struct Episode {
  HeadKind head = HeadKind::kRegression;
  std::size_t max_features = 0;
  std::size_t active_features = 0;
  std::size_t classes = 0;
  std::vector<double> context_x;
  std::vector<double> context_y;
  std::vector<double> query_x;
  std::vector<double> query_y;
  std::vector<std::size_t> context_rows;
  std::vector<std::size_t> query_rows;

  std::size_t context_size() const { return context_y.size(); }
  std::size_t query_size() const { return query_y.size(); }
};

/// Per-column z-scoring fitted on context rows only, followed by zero padding
/// to `width` and the width/active rescale. Missing entries (NaN) become the
/// context mean, i.e. 0 after scaling; constant columns map to 0.
class FeatureScaler {
 public:
  /// `raw` is row-major `rows` x `active` with NaN for missing cells.
  static FeatureScaler fit(std::span<const double> raw, std::size_t rows, std::size_t active,
                           std::size_t width);

  std::size_t active() const { return mean_.size(); }
  std::size_t width() const { return width_; }
  /// Transforms `rows` raw rows into a `rows` x width matrix.
  std::vector<double> transform(std::span<const double> raw, std::size_t rows) const;

 private:
  std::vector<double> mean_;
  std::vector<double> inv_std_;
  std::size_t width_ = 0;
  double gain_ = 1.0;
};

/// Context-target standardization for regression (population std).
struct TargetScaler {
  double mean = 0.0;
  double std = 1.0;

  /// Throws EpisodeRejected when the targets have zero variance.
  static TargetScaler fit(std::span<const double> y);
  double forward(double y) const { return (y - mean) / std; }
  double inverse(double z) const { return z * std + mean; }
};

/// Dense class codes ordered by context frequency (ties to the lower source
/// code), keeping at most `max_classes`. `code_of[c]` is the dense code of
/// source class c or -1 when it is dropped.
struct ClassRemap {
  std::vector<int> code_of;
  std::vector<std::size_t> source_of;

  /// Throws EpisodeRejected when fewer than two classes are present.
  static ClassRemap fit(std::span<const double> codes, std::size_t max_classes);
  std::size_t classes() const { return source_of.size(); }
  int map(double code) const;
};

/// Row-major `rows.size()` x `columns.size()` raw matrix with NaN for missing
/// cells. Categorical codes are used as numbers.
std::vector<double> gather_features(const data::Table& table, std::span<const std::size_t> columns,
                                    std::span<const std::size_t> rows);

/// Rows whose target cell is observed.
std::vector<std::size_t> usable_rows(const data::Table& table, std::size_t target);

/// Samples rows without replacement and preprocesses them. Tasks with more
/// features than `max_features` use a random subset of them. Throws
/// ConfigError if the table lacks context + query usable rows and
/// EpisodeRejected if the sampled context cannot define the task.
Episode build_episode(const data::Table& table, const Task& task, const EpisodeConfig& config,
                      core::Rng& rng);

}  // namespace ticl::tasks
