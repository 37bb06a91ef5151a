#include "ticl/tasks/task.hpp"

#include <bit>
#include <cmath>
#include <set>

#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"

namespace ticl::tasks {

std::string_view head_name(HeadKind head) {
  return head == HeadKind::kClassification ? "classification" : "regression";
}

FeatureMask::FeatureMask(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

void FeatureMask::set(std::size_t i, bool on) {
  if (i >= bits_) throw ConfigError("feature bit " + std::to_string(i) + " out of range");
  const std::uint64_t bit = std::uint64_t{1} << (i % 64);
  if (on) {
    words_[i / 64] |= bit;
  } else {
    words_[i / 64] &= ~bit;
  }
}

std::size_t FeatureMask::count() const {
  std::size_t n = 0;
  for (const auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::size_t> FeatureMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t word = words_[w];
    while (word != 0) {
      out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(word)));
      word &= word - 1;
    }
  }
  return out;
}

std::string FeatureMask::to_string() const {
  std::string out(bits_, '0');
  for (std::size_t i = 0; i < bits_; ++i) {
    if (test(i)) out[i] = '1';
  }
  return out;
}

std::size_t TaskHash::operator()(const Task& task) const {
  std::uint64_t h = core::mix64(task.target);
  for (const auto w : task.features.words()) h = core::mix64(h ^ w);
  return static_cast<std::size_t>(h);
}

std::optional<HeadKind> target_head(const data::Column& column) {
  if (column.categorical()) {
    std::set<double> seen;
    for (std::size_t r = 0; r < column.size() && seen.size() < 2; ++r) {
      if (!column.is_missing(r)) seen.insert(column.values[r]);
    }
    if (seen.size() >= 2) return HeadKind::kClassification;
    return std::nullopt;
  }
  std::optional<double> first;
  for (std::size_t r = 0; r < column.size(); ++r) {
    if (column.is_missing(r)) continue;
    if (!first) {
      first = column.values[r];
    } else if (column.values[r] != *first) {
      return HeadKind::kRegression;
    }
  }
  return std::nullopt;
}

std::vector<std::size_t> eligible_targets(const data::Table& table) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (target_head(table.column(c))) out.push_back(c);
  }
  return out;
}

void validate_task(const data::Table& table, const Task& task) {
  if (task.target >= table.column_count()) throw ConfigError("task target out of range");
  if (task.features.bits() != table.column_count()) {
    throw ConfigError("task mask covers " + std::to_string(task.features.bits()) +
                      " columns, table has " + std::to_string(table.column_count()));
  }
  if (task.features.test(task.target)) throw ConfigError("task target is also a feature");
  if (task.features.empty()) throw ConfigError("task has no features");
  const auto head = target_head(table.column(task.target));
  if (!head || *head != task.head) throw ConfigError("task head does not match the target column");
}

std::uint64_t count_tasks(std::size_t k, std::size_t eligible) {
  if (k <= 1 || eligible == 0) return 0;
  // 2^(k-1) - 1 subsets per target.
  if (k - 1 >= 62) return kTaskCountCap;
  const std::uint64_t per_target = (std::uint64_t{1} << (k - 1)) - 1;
  if (per_target > kTaskCountCap / eligible) return kTaskCountCap;
  return std::min<std::uint64_t>(per_target * eligible, kTaskCountCap);
}

std::uint64_t count_tasks(std::size_t k, std::span<const std::size_t> eligible) {
  return count_tasks(k, eligible.size());
}

}  // namespace ticl::tasks
