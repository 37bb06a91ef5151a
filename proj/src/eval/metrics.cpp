#include "ticl/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "ticl/core/errors.hpp"

namespace ticl::eval {
namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                         std::to_string(b) + " truths");
  }
  if (a == 0) throw DimensionError(std::string(what) + ": empty input");
}

// Exact test: the floating mean of equal values need not equal them.
bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> accuracy(std::span<const double> probs, std::span<const double> truth,
                               std::size_t classes) {
  require_aligned(probs.size(), truth.size() * classes, "accuracy");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const double* row = probs.data() + r * classes;
    const auto arg = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    hits += static_cast<double>(arg) == truth[r] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::optional<double> auc_binary(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  require_aligned(scores.size(), positive.size(), "auc");
  // Mann-Whitney form: average ranks give ties exactly half credit.
  const auto ranks = average_ranks(scores);
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      pos += 1;
      rank_sum += ranks[i];
    }
  }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

std::optional<double> auc_ovr(std::span<const double> probs, std::span<const double> truth,
                              std::size_t classes) {
  require_aligned(probs.size(), truth.size() * classes, "auc");
  std::vector<double> scores(truth.size());
  std::vector<std::uint8_t> positive(truth.size());
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t r = 0; r < truth.size(); ++r) {
      scores[r] = probs[r * classes + c];
      positive[r] = truth[r] == static_cast<double>(c) ? 1 : 0;
    }
    if (const auto a = auc_binary(scores, positive)) {
      total += *a;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  // With two classes present both one-vs-rest AUCs coincide.
  return total / static_cast<double>(counted);
}

std::optional<double> r2(std::span<const double> predicted, std::span<const double> truth) {
  require_aligned(predicted.size(), truth.size(), "r2");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sse += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    sst += (truth[i] - mean) * (truth[i] - mean);
  }
  if (sst == 0 || is_constant(truth)) return std::nullopt;
  return 1.0 - sse / sst;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  require_aligned(a.size(), b.size(), "pearson");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0 || is_constant(a) || is_constant(b)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  require_aligned(a.size(), b.size(), "spearman");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

}  // namespace ticl::eval
