#include "ticl/tasks/episode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ticl/core/errors.hpp"

namespace ticl::tasks {
namespace {

constexpr double kStdFloor = 1e-8;

std::vector<std::size_t> partial_shuffle(std::vector<std::size_t> pool, std::size_t take,
                                         core::Rng& rng) {
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace

FeatureScaler FeatureScaler::fit(std::span<const double> raw, std::size_t rows, std::size_t active,
                                 std::size_t width) {
  if (active == 0 || active > width) {
    throw DimensionError("feature scaler: " + std::to_string(active) + " active columns for width " +
                         std::to_string(width));
  }
  if (raw.size() != rows * active) throw DimensionError("feature scaler: raw matrix size mismatch");
  FeatureScaler s;
  s.width_ = width;
  s.gain_ = static_cast<double>(width) / static_cast<double>(active);
  s.mean_.assign(active, 0.0);
  s.inv_std_.assign(active, 0.0);
  for (std::size_t c = 0; c < active; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = raw[r * active + c];
      if (!std::isnan(v)) {
        sum += v;
        ++n;
      }
    }
    if (n == 0) continue;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = raw[r * active + c];
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    s.mean_[c] = mean;
    // inv_std 0 sends constant and all-missing columns to exactly 0.
    s.inv_std_[c] = sd > kStdFloor * std::max(1.0, std::abs(mean)) ? 1.0 / sd : 0.0;
  }
  return s;
}

std::vector<double> FeatureScaler::transform(std::span<const double> raw, std::size_t rows) const {
  const std::size_t active = mean_.size();
  if (raw.size() != rows * active) {
    throw DimensionError("feature scaler: expected " + std::to_string(active) +
                         " columns per row, got " + std::to_string(raw.size()) + " cells for " +
                         std::to_string(rows) + " rows");
  }
  std::vector<double> out(rows * width_, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < active; ++c) {
      const double v = raw[r * active + c];
      if (std::isnan(v) || inv_std_[c] == 0.0) continue;
      out[r * width_ + c] = (v - mean_[c]) * inv_std_[c] * gain_;
    }
  }
  return out;
}

TargetScaler TargetScaler::fit(std::span<const double> y) {
  if (y.empty()) throw EpisodeRejected("no context targets");
  const double n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > kStdFloor * std::max(1.0, std::abs(mean)))) {
    throw EpisodeRejected("context targets have zero variance");
  }
  return TargetScaler{mean, sd};
}

ClassRemap ClassRemap::fit(std::span<const double> codes, std::size_t max_classes) {
  std::size_t top = 0;
  for (const double c : codes) top = std::max(top, static_cast<std::size_t>(c) + 1);
  std::vector<std::size_t> counts(top, 0);
  for (const double c : codes) ++counts[static_cast<std::size_t>(c)];
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < top; ++c) {
    if (counts[c] > 0) order.push_back(c);
  }
  if (order.size() < 2) throw EpisodeRejected("context holds fewer than two classes");
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  if (order.size() > max_classes) order.resize(max_classes);
  ClassRemap m;
  m.code_of.assign(top, -1);
  m.source_of = order;
  for (std::size_t i = 0; i < order.size(); ++i) m.code_of[order[i]] = static_cast<int>(i);
  return m;
}

int ClassRemap::map(double code) const {
  const auto c = static_cast<std::size_t>(code);
  return c < code_of.size() ? code_of[c] : -1;
}

std::vector<double> gather_features(const data::Table& table, std::span<const std::size_t> columns,
                                    std::span<const std::size_t> rows) {
  std::vector<double> out(rows.size() * columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto& col = table.column(columns[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      out[i * columns.size() + j] =
          col.is_missing(r) ? std::numeric_limits<double>::quiet_NaN() : col.values[r];
    }
  }
  return out;
}

std::vector<std::size_t> usable_rows(const data::Table& table, std::size_t target) {
  const auto& col = table.column(target);
  std::vector<std::size_t> out;
  out.reserve(table.row_count());
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    if (!col.is_missing(r)) out.push_back(r);
  }
  return out;
}

Episode build_episode(const data::Table& table, const Task& task, const EpisodeConfig& config,
                      core::Rng& rng) {
  validate_task(table, task);
  if (config.context == 0 || config.query == 0) throw ConfigError("episode needs context and query rows");
  auto pool = usable_rows(table, task.target);
  const std::size_t need = config.context + config.query;
  if (pool.size() < need) {
    throw ConfigError("table '" + table.name() + "' has " + std::to_string(pool.size()) +
                      " usable rows, episode needs " + std::to_string(need));
  }
  auto features = task.features.indices();
  if (features.size() > config.max_features) {
    features = partial_shuffle(std::move(features), config.max_features, rng);
    std::sort(features.begin(), features.end());
  }
  const auto picked = partial_shuffle(std::move(pool), need, rng);

  Episode ep;
  ep.head = task.head;
  ep.max_features = config.max_features;
  ep.active_features = features.size();
  std::vector<std::size_t> ctx(picked.begin(), picked.begin() + static_cast<std::ptrdiff_t>(config.context));
  std::vector<std::size_t> qry(picked.begin() + static_cast<std::ptrdiff_t>(config.context), picked.end());
  const auto& target = table.column(task.target);

  if (task.head == HeadKind::kClassification) {
    std::vector<double> ctx_codes;
    ctx_codes.reserve(ctx.size());
    for (const auto r : ctx) ctx_codes.push_back(target.values[r]);
    const auto remap = ClassRemap::fit(ctx_codes, config.max_classes);
    ep.classes = remap.classes();
    auto keep = [&](std::vector<std::size_t>& rows, std::vector<double>& y) {
      std::vector<std::size_t> kept;
      for (const auto r : rows) {
        const int code = remap.map(target.values[r]);
        if (code < 0) continue;
        kept.push_back(r);
        y.push_back(code);
      }
      rows = std::move(kept);
    };
    keep(ctx, ep.context_y);
    keep(qry, ep.query_y);
    if (qry.empty()) throw EpisodeRejected("no query rows left after class filtering");
  } else {
    for (const auto r : ctx) ep.context_y.push_back(target.values[r]);
    const auto scaler = TargetScaler::fit(ep.context_y);
    for (auto& y : ep.context_y) y = scaler.forward(y);
    for (const auto r : qry) ep.query_y.push_back(scaler.forward(target.values[r]));
  }

  const auto raw_ctx = gather_features(table, features, ctx);
  const auto raw_qry = gather_features(table, features, qry);
  const auto scaler = FeatureScaler::fit(raw_ctx, ctx.size(), features.size(), config.max_features);
  ep.context_x = scaler.transform(raw_ctx, ctx.size());
  ep.query_x = scaler.transform(raw_qry, qry.size());
  ep.context_rows = std::move(ctx);
  ep.query_rows = std::move(qry);
  return ep;
}

}  // namespace ticl::tasks
