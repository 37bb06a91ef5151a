#pragma once

#include <cstdint>
#include <vector>

#include "ticl/tasks/task.hpp"

namespace ticl::tasks {

/// Budget grid used by the task-count sweep.
inline constexpr std::uint64_t kBudgetGrid[] = {5, 50, 500, 5000, 50000};

struct TaskSpace {
  std::string table;
  std::size_t columns = 0;
  std::uint64_t total = 0;
  std::uint64_t budget = 0;
  std::vector<Task> tasks;
};

/// Deterministic list of min(budget, total) distinct tasks. Each draw picks
/// an eligible target uniformly and a feature subset as a uniform random
/// bitmask over the other columns (rejecting the empty mask); duplicates are
/// skipped. The list for a smaller budget is a prefix of the list for a
/// larger one under the same seed, and once the budget covers the whole
/// space the list is a permutation of the full enumeration.
TaskSpace build_task_space(const data::Table& table, std::uint64_t budget, std::uint64_t seed);

/// Every task of the table in canonical order (target ascending, then mask
/// value ascending). Intended for small tables; throws ConfigError when the
/// space exceeds `limit`.
std::vector<Task> enumerate_tasks(const data::Table& table, std::uint64_t limit = 1u << 24);

}  // namespace ticl::tasks
