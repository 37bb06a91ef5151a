#include "ticl/tasks/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"

namespace ticl::tasks {

std::string_view axis_name(AblationAxis axis) {
  return axis == AblationAxis::kRows ? "rows" : "columns";
}

AblationAxis parse_axis(std::string_view name) {
  if (name == "rows") return AblationAxis::kRows;
  if (name == "columns") return AblationAxis::kColumns;
  throw ConfigError("unknown ablation axis '" + std::string(name) + "'");
}

std::size_t ablation_drop_count(std::size_t count, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("drop fraction " + std::to_string(fraction) + " outside [0, 1)");
  }
  // The small slack keeps 10 * 0.7 at 7 despite 0.7 not being exact.
  const auto drop = static_cast<std::size_t>(std::floor(static_cast<double>(count) * fraction + 1e-9));
  return count == 0 ? 0 : std::min(drop, count - 1);
}

data::Table ablate_table(const data::Table& table, AblationAxis axis, double fraction,
                         std::uint64_t seed) {
  const std::size_t count =
      axis == AblationAxis::kRows ? table.row_count() : table.column_count();
  const std::size_t drop = ablation_drop_count(count, fraction);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  core::Rng rng = core::make_stream(seed, 0xab1a, axis == AblationAxis::kRows ? 1 : 2);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
  std::sort(kept.begin(), kept.end());
  return axis == AblationAxis::kRows ? table.select_rows(kept) : table.select_columns(kept);
}

}  // namespace ticl::tasks
