#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ticl::eval {

/// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Fraction of rows whose highest-probability class (lowest index on ties)
/// equals the truth. `probs` is rows x classes.
std::optional<double> accuracy(std::span<const double> probs, std::span<const double> truth,
                               std::size_t classes);

/// P(score of a positive > score of a negative), ties counting one half.
/// nullopt unless both groups are present.
std::optional<double> auc_binary(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Unweighted mean of one-vs-rest AUCs over the classes present in `truth`;
/// nullopt when fewer than two classes are present.
std::optional<double> auc_ovr(std::span<const double> probs, std::span<const double> truth,
                              std::size_t classes);

/// 1 - SSE/SST; nullopt when the truth is constant.
std::optional<double> r2(std::span<const double> predicted, std::span<const double> truth);
/// nullopt when either side is constant.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
/// Pearson correlation of average ranks.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

}  // namespace ticl::eval
