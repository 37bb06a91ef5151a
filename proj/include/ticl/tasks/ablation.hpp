#pragma once

#include <cstdint>

#include "ticl/data/table.hpp"

namespace ticl::tasks {

enum class AblationAxis { kRows, kColumns };

std::string_view axis_name(AblationAxis axis);
AblationAxis parse_axis(std::string_view name);

/// Number of entries removed from `count` at `fraction`: floor(count *
/// fraction), but never all of them.
std::size_t ablation_drop_count(std::size_t count, double fraction);

/// Removes a uniformly random subset of rows or columns. Survivors keep
/// their original order. Throws ConfigError unless 0 <= fraction < 1.
data::Table ablate_table(const data::Table& table, AblationAxis axis, double fraction,
                         std::uint64_t seed);

}  // namespace ticl::tasks
