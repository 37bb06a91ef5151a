#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ticl/data/table.hpp"

namespace ticl::tasks {

enum class HeadKind { kClassification, kRegression };

std::string_view head_name(HeadKind head);

/// Dynamic bitset over the columns of a table.
class FeatureMask {
 public:
  FeatureMask() = default;
  explicit FeatureMask(std::size_t bits);

  std::size_t bits() const { return bits_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void set(std::size_t i, bool on = true);
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  /// Set bit positions in increasing order.
  std::vector<std::size_t> indices() const;
  std::span<const std::uint64_t> words() const { return words_; }
  std::string to_string() const;

  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// One pre-training problem: predict `target` from the columns in
/// `features`; every other column is removed.
struct Task {
  std::string table;
  std::size_t target = 0;
  FeatureMask features;
  HeadKind head = HeadKind::kRegression;

  friend bool operator==(const Task&, const Task&) = default;
};

struct TaskHash {
  std::size_t operator()(const Task& task) const;
};

/// Head for a target column: classification for categorical columns with at
/// least two observed levels, regression for numeric columns with at least
/// two distinct observed values, nullopt otherwise.
std::optional<HeadKind> target_head(const data::Column& column);

/// Columns usable as targets.
std::vector<std::size_t> eligible_targets(const data::Table& table);

/// Throws ConfigError if the task is malformed for `table`.
void validate_task(const data::Table& table, const Task& task);

inline constexpr std::uint64_t kTaskCountCap = std::uint64_t{1} << 62;

/// Number of (target, non-empty feature subset of the other k-1 columns)
/// pairs: eligible * (2^(k-1) - 1), saturating at kTaskCountCap.
std::uint64_t count_tasks(std::size_t k, std::size_t eligible);
std::uint64_t count_tasks(std::size_t k, std::span<const std::size_t> eligible);

}  // namespace ticl::tasks
