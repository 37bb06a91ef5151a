#include "ticl/tasks/task_space.hpp"

#include <random>
#include <unordered_set>

#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"

namespace ticl::tasks {

TaskSpace build_task_space(const data::Table& table, std::uint64_t budget, std::uint64_t seed) {
  const std::size_t k = table.column_count();
  if (k < 2) throw ConfigError("table '" + table.name() + "' needs at least 2 columns for tasks");
  if (budget < 1) throw ConfigError("task budget must be at least 1");

  TaskSpace space;
  space.table = table.name();
  space.columns = k;
  space.budget = budget;
  const auto eligible = eligible_targets(table);
  space.total = count_tasks(k, eligible);
  if (space.total == 0) return space;

  std::vector<HeadKind> heads;
  for (const auto t : eligible) heads.push_back(*target_head(table.column(t)));

  const std::uint64_t wanted = std::min(budget, space.total);
  space.tasks.reserve(static_cast<std::size_t>(wanted));
  std::unordered_set<Task, TaskHash> seen;
  core::Rng rng = core::make_stream(seed, 0x7a5c);
  std::uniform_int_distribution<std::size_t> pick_target(0, eligible.size() - 1);
  while (space.tasks.size() < wanted) {
    const std::size_t which = pick_target(rng);
    Task task;
    task.table = table.name();
    task.target = eligible[which];
    task.head = heads[which];
    task.features = FeatureMask(k);
    do {
      // One fair coin per non-target column, drawn 64 at a time.
      std::uint64_t bits = 0;
      std::size_t left = 0;
      for (std::size_t c = 0; c < k; ++c) {
        if (left == 0) {
          bits = rng();
          left = 64;
        }
        const bool on = (bits & 1U) != 0;
        bits >>= 1;
        --left;
        task.features.set(c, on && c != task.target);
      }
    } while (task.features.empty());
    if (seen.insert(task).second) space.tasks.push_back(std::move(task));
  }
  return space;
}

std::vector<Task> enumerate_tasks(const data::Table& table, std::uint64_t limit) {
  const std::size_t k = table.column_count();
  const auto eligible = eligible_targets(table);
  const std::uint64_t total = count_tasks(k, eligible);
  if (total > limit) {
    throw ConfigError("task space of " + std::to_string(total) + " exceeds enumeration limit");
  }
  std::vector<Task> out;
  out.reserve(static_cast<std::size_t>(total));
  for (const auto target : eligible) {
    const HeadKind head = *target_head(table.column(target));
    const std::uint64_t subsets = std::uint64_t{1} << (k - 1);
    for (std::uint64_t m = 1; m < subsets; ++m) {
      Task task;
      task.table = table.name();
      task.target = target;
      task.head = head;
      task.features = FeatureMask(k);
      // Bit j of m maps to the j-th non-target column.
      std::size_t j = 0;
      for (std::size_t c = 0; c < k; ++c) {
        if (c == target) continue;
        if ((m >> j) & 1U) task.features.set(c);
        ++j;
      }
      out.push_back(std::move(task));
    }
  }
  return out;
}

}  // namespace ticl::tasks
