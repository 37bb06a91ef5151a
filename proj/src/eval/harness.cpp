#include "ticl/eval/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"
#include "ticl/data/io.hpp"
#include "ticl/eval/metrics.hpp"
#include "ticl/tasks/episode.hpp"
#include "ticl/trees/trees.hpp"

namespace ticl::eval {
namespace {

constexpr std::uint64_t kFoldKey = 0xf01d;
constexpr std::uint64_t kFeatureKey = 0xfea7;
constexpr std::uint64_t kNullKey = 0x9e11;
constexpr std::uint64_t kForestKey = 0xf0e57;

std::string format_value(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<double> targets_of(const data::Column& column, std::span<const std::size_t> rows) {
  std::vector<double> y;
  y.reserve(rows.size());
  for (const auto r : rows) y.push_back(column.values[r]);
  return y;
}

/// Pool-mean imputation followed by pool standardization.
struct Preprocessed {
  trees::Matrix context;
  trees::Matrix query;
};

Preprocessed impute_standardize(std::vector<double> ctx, std::vector<double> qry, std::size_t cols) {
  const std::size_t nc = ctx.size() / cols, nq = cols ? qry.size() / cols : 0;
  for (std::size_t c = 0; c < cols; ++c) {
    double sum = 0, count = 0;
    for (std::size_t r = 0; r < nc; ++r) {
      const double v = ctx[r * cols + c];
      if (!std::isnan(v)) {
        sum += v;
        count += 1;
      }
    }
    const double mean = count > 0 ? sum / count : 0.0;
    double ss = 0;
    for (std::size_t r = 0; r < nc; ++r) {
      double& v = ctx[r * cols + c];
      if (std::isnan(v)) v = mean;
      ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(nc));
    const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
    for (std::size_t r = 0; r < nc; ++r) ctx[r * cols + c] = (ctx[r * cols + c] - mean) * inv;
    for (std::size_t r = 0; r < nq; ++r) {
      double& v = qry[r * cols + c];
      v = std::isnan(v) ? 0.0 : (v - mean) * inv;
    }
  }
  return {trees::Matrix(nc, cols, std::move(ctx)), trees::Matrix(nq, cols, std::move(qry))};
}

}  // namespace

std::string_view metric_name(MetricKind metric) {
  switch (metric) {
    case MetricKind::kAccuracy: return "accuracy";
    case MetricKind::kAucOvr: return "auc-ovr";
    case MetricKind::kR2: return "r2";
    case MetricKind::kPearson: return "pearson";
    case MetricKind::kSpearman: return "spearman";
  }
  return "?";
}

MetricKind parse_metric(std::string_view name) {
  for (const auto m : {MetricKind::kAccuracy, MetricKind::kAucOvr, MetricKind::kR2, MetricKind::kPearson,
                       MetricKind::kSpearman}) {
    if (metric_name(m) == name) return m;
  }
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

void EvalProtocol::validate() const {
  if (!(context_fraction > 0 && context_fraction < 1)) {
    throw ConfigError("context_fraction must lie in (0, 1), got " + std::to_string(context_fraction));
  }
  if (folds == 0) throw ConfigError("folds must be at least 1");
  if (k == 0) throw ConfigError("retrieval k must be at least 1");
}

std::vector<Fold> make_folds(const data::Table& table, std::size_t target, const EvalProtocol& protocol) {
  protocol.validate();
  if (target >= table.column_count()) throw ConfigError("evaluation target out of range");
  const auto usable = tasks::usable_rows(table, target);
  if (usable.empty()) {
    throw DataError("target '" + table.column(target).name + "' of " + table.name() + " is all missing");
  }
  const auto n = usable.size();
  const auto nc = static_cast<std::size_t>(std::llround(protocol.context_fraction * static_cast<double>(n)));
  if (nc == 0 || nc >= n) {
    throw DataError(table.name() + ": " + std::to_string(n) + " usable rows cannot be split " +
                    std::to_string(protocol.context_fraction) + " / rest");
  }
  std::vector<Fold> folds;
  for (std::size_t f = 0; f < protocol.folds; ++f) {
    Fold fold;
    fold.seed = core::stream_seed(protocol.seed, kFoldKey, f);
    auto rows = usable;
    core::Rng rng(fold.seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    fold.context.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(nc));
    fold.query.assign(rows.begin() + static_cast<std::ptrdiff_t>(nc), rows.end());
    std::sort(fold.context.begin(), fold.context.end());
    std::sort(fold.query.begin(), fold.query.end());
    folds.push_back(std::move(fold));
  }
  return folds;
}

tasks::HeadKind eval_head(const data::Column& target) {
  return target.categorical() ? tasks::HeadKind::kClassification : tasks::HeadKind::kRegression;
}

std::vector<std::size_t> eval_features(const data::Table& table, std::size_t target, std::size_t limit,
                                       std::uint64_t seed) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c != target) cols.push_back(c);
  }
  if (limit == 0 || cols.size() <= limit) return cols;
  core::Rng rng = core::make_stream(seed, kFeatureKey);
  for (std::size_t i = 0; i < limit; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, cols.size() - 1);
    std::swap(cols[i], cols[pick(rng)]);
  }
  cols.resize(limit);
  std::sort(cols.begin(), cols.end());
  return cols;
}

std::vector<std::size_t> retrieve_context(std::span<const double> pool, std::size_t cols,
                                          std::span<const double> query, std::size_t k) {
  if (cols == 0 || pool.size() % cols != 0 || query.size() != cols) {
    throw DimensionError("retrieval: pool of " + std::to_string(pool.size()) + " values and query of " +
                         std::to_string(query.size()) + " for " + std::to_string(cols) + " columns");
  }
  const std::size_t n = pool.size() / cols;
  if (k > n) {
    throw DimensionError("retrieval: k = " + std::to_string(k) + " exceeds pool of " + std::to_string(n));
  }
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0;
    const double* row = pool.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += (row[c] - query[c]) * (row[c] - query[c]);
    dist[r] = {s, r};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

ZScore ZScore::fit(std::span<const double> reference, std::size_t cols) {
  ZScore z;
  z.mean.assign(cols, 0.0);
  z.inv_std.assign(cols, 0.0);
  const std::size_t n = reference.size() / cols;
  for (std::size_t c = 0; c < cols; ++c) {
    double sum = 0, count = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = reference[r * cols + c];
      if (!std::isnan(v)) {
        sum += v;
        count += 1;
      }
    }
    if (count == 0) continue;
    const double mean = sum / count;
    double ss = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = reference[r * cols + c];
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / count);
    z.mean[c] = mean;
    z.inv_std[c] = sd > 1e-8 * std::max(1.0, std::abs(mean)) ? 1.0 / sd : 0.0;
  }
  return z;
}

std::vector<double> ZScore::apply(std::span<const double> rows) const {
  const std::size_t cols = mean.size();
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = i % cols;
    out[i] = std::isnan(rows[i]) ? 0.0 : (rows[i] - mean[c]) * inv_std[c];
  }
  return out;
}

std::optional<double> EvalResult::mean() const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& v : folds) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<EvalResult> score(const Evaluation& evaluation, const std::string& eval_table,
                              const std::string& pretrain_table) {
  const bool cls = evaluation.head == tasks::HeadKind::kClassification;
  std::vector<MetricKind> kinds = cls ? std::vector{MetricKind::kAccuracy, MetricKind::kAucOvr}
                                      : std::vector{MetricKind::kR2, MetricKind::kPearson, MetricKind::kSpearman};
  std::vector<EvalResult> out;
  for (const auto kind : kinds) {
    EvalResult r{eval_table, pretrain_table, kind, {}};
    for (const auto& f : evaluation.folds) {
      switch (kind) {
        case MetricKind::kAccuracy: r.folds.push_back(accuracy(f.outputs, f.truth, evaluation.width)); break;
        case MetricKind::kAucOvr: r.folds.push_back(auc_ovr(f.outputs, f.truth, evaluation.width)); break;
        case MetricKind::kR2: r.folds.push_back(r2(f.outputs, f.truth)); break;
        case MetricKind::kPearson: r.folds.push_back(pearson(f.outputs, f.truth)); break;
        case MetricKind::kSpearman: r.folds.push_back(spearman(f.outputs, f.truth)); break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

Evaluation run_icl(const data::Table& table, std::size_t target, const EvalProtocol& protocol,
                   std::size_t max_features, const QueryPredictor& predict) {
  const auto folds = make_folds(table, target, protocol);
  const auto& column = table.column(target);
  const auto features = eval_features(table, target, max_features, protocol.seed);
  const std::size_t p = features.size();
  Evaluation ev;
  ev.head = eval_head(column);
  ev.width = ev.head == tasks::HeadKind::kClassification ? column.cardinality() : 1;

  for (const auto& fold : folds) {
    const auto pool_raw = tasks::gather_features(table, features, fold.context);
    const auto query_raw = tasks::gather_features(table, features, fold.query);
    const auto pool_y = targets_of(column, fold.context);
    const auto zs = ZScore::fit(pool_raw, p);
    const auto pool_z = zs.apply(pool_raw);
    const auto query_z = zs.apply(query_raw);
    const std::size_t k = std::min(protocol.k, fold.context.size());

    FoldOutput out;
    out.truth = targets_of(column, fold.query);
    out.outputs.reserve(fold.query.size() * ev.width);
    std::vector<double> cx(k * p), cy(k);
    for (std::size_t q = 0; q < fold.query.size(); ++q) {
      const std::span<const double> qz(query_z.data() + q * p, p);
      const auto nearest = retrieve_context(pool_z, p, qz, k);
      for (std::size_t i = 0; i < k; ++i) {
        std::copy_n(pool_raw.begin() + static_cast<std::ptrdiff_t>(nearest[i] * p), p,
                    cx.begin() + static_cast<std::ptrdiff_t>(i * p));
        cy[i] = pool_y[nearest[i]];
      }
      model::DownstreamQuery dq;
      dq.head = ev.head;
      dq.context_x = cx;
      dq.context_y = cy;
      dq.query_x = std::span<const double>(query_raw.data() + q * p, p);
      dq.features = p;
      dq.class_count = ev.width;
      if (ev.head == tasks::HeadKind::kRegression &&
          std::all_of(cy.begin(), cy.end(), [&](double v) { return v == cy[0]; })) {
        out.outputs.push_back(cy[0]);
        continue;
      }
      const auto pred = predict(dq, fold.query[q]);
      if (pred.size() != ev.width) {
        throw DimensionError("predictor returned " + std::to_string(pred.size()) + " values, expected " +
                             std::to_string(ev.width));
      }
      out.outputs.insert(out.outputs.end(), pred.begin(), pred.end());
    }
    ev.folds.push_back(std::move(out));
  }
  return ev;
}

Evaluation run_model(const model::Weights<float>& weights, const data::Table& table, std::size_t target,
                     const EvalProtocol& protocol) {
  return run_icl(table, target, protocol, weights.config.max_features,
                 [&](const model::DownstreamQuery& q, std::size_t) { return model::predict_downstream(weights, q); });
}

std::vector<EvalResult> evaluate(const train::Checkpoint& checkpoint, const data::Table& table,
                                 std::size_t target, const EvalProtocol& protocol) {
  return score(run_model(checkpoint.weights, table, target, protocol), table.name(), checkpoint.table);
}

std::string_view baseline_name(Baseline baseline) {
  return baseline == Baseline::kForest ? "forest" : "linear";
}

Evaluation run_baseline(Baseline baseline, const data::Table& table, std::size_t target,
                        const EvalProtocol& protocol) {
  const auto folds = make_folds(table, target, protocol);
  const auto& column = table.column(target);
  const auto features = eval_features(table, target, 0, protocol.seed);
  Evaluation ev;
  ev.head = eval_head(column);
  const bool cls = ev.head == tasks::HeadKind::kClassification;
  ev.width = cls ? column.cardinality() : 1;

  for (const auto& fold : folds) {
    auto data = impute_standardize(tasks::gather_features(table, features, fold.context),
                                   tasks::gather_features(table, features, fold.query), features.size());
    const auto y = targets_of(column, fold.context);
    FoldOutput out;
    out.truth = targets_of(column, fold.query);
    if (baseline == Baseline::kForest) {
      trees::ForestParams fp;
      fp.kind = cls ? trees::TreeKind::kClassification : trees::TreeKind::kRegression;
      fp.classes = cls ? ev.width : 0;
      fp.seed = core::stream_seed(fold.seed, kForestKey);
      out.outputs = trees::fit_forest(data.context, y, fp).predict(data.query);
    } else if (cls) {
      out.outputs = trees::fit_logistic(data.context, y, ev.width).predict(data.query);
    } else {
      out.outputs = trees::fit_ridge(data.context, y).predict(data.query);
    }
    ev.folds.push_back(std::move(out));
  }
  return ev;
}

NullSummary permutation_null(const Evaluation& evaluation, std::size_t permutations, std::uint64_t seed) {
  if (evaluation.head != tasks::HeadKind::kClassification) {
    throw ConfigError("permutation null is defined for classification only");
  }
  if (permutations < 2) throw ConfigError("permutation null needs at least two permutations");
  std::vector<double> draws;
  for (std::size_t p = 0; p < permutations; ++p) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < evaluation.folds.size(); ++f) {
      auto truth = evaluation.folds[f].truth;
      core::Rng rng = core::make_stream(seed, kNullKey, p * evaluation.folds.size() + f);
      std::shuffle(truth.begin(), truth.end(), rng);
      if (const auto a = auc_ovr(evaluation.folds[f].outputs, truth, evaluation.width)) {
        sum += *a;
        ++n;
      }
    }
    if (n > 0) draws.push_back(sum / static_cast<double>(n));
  }
  if (draws.size() < 2) throw DataError("permutation null: AUC undefined on every fold");
  NullSummary s;
  s.permutations = draws.size();
  s.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
  double ss = 0;
  for (const double d : draws) ss += (d - s.mean) * (d - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(draws.size() - 1));
  return s;
}

std::vector<ResultRecord> to_records(std::span<const EvalResult> results, std::uint64_t seed,
                                     const std::string& config_hash) {
  std::vector<ResultRecord> out;
  for (const auto& r : results) {
    const std::string metric(metric_name(r.metric));
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      out.push_back({r.pretrain_table, r.eval_table, metric, f, r.folds[f], seed, config_hash});
    }
  }
  return out;
}

void append_results(const std::filesystem::path& path, std::span<const ResultRecord> records) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot open results file " + path.string());
  if (fresh) out << kResultsHeader << '\n';
  for (const auto& r : records) {
    for (const auto* field : {&r.pretrain, &r.eval, &r.config_hash}) {
      if (field->find_first_of(",\n\"") != std::string::npos) {
        throw FormatError("results field contains a delimiter: " + *field);
      }
    }
    out << r.pretrain << ',' << r.eval << ',' << r.metric << ',' << r.fold << ','
        << (r.value ? format_value(*r.value) : "NA") << ',' << r.seed << ',' << r.config_hash << '\n';
  }
  if (!out) throw Error("failed writing results file " + path.string());
}

std::vector<ResultRecord> read_results(const std::filesystem::path& path) {
  const auto text = data::read_delimited(path);
  std::string header;
  for (std::size_t i = 0; i < text.header.size(); ++i) header += (i ? "," : "") + text.header[i];
  if (header != kResultsHeader) throw FormatError(path.string() + ": unexpected header '" + header + "'");
  std::vector<ResultRecord> out;
  for (const auto& row : text.rows) {
    ResultRecord r;
    if (row.size() != 7) throw FormatError(path.string() + ": expected 7 fields");
    r.pretrain = row[0];
    r.eval = row[1];
    r.metric = row[2];
    const auto fold = std::from_chars(row[3].data(), row[3].data() + row[3].size(), r.fold);
    if (fold.ec != std::errc() || fold.ptr != row[3].data() + row[3].size()) {
      throw FormatError(path.string() + ": bad fold '" + row[3] + "'");
    }
    if (row[4] != "NA") {
      const auto v = data::parse_number(row[4]);
      if (!v) throw FormatError(path.string() + ": bad value '" + row[4] + "'");
      r.value = v;
    }
    const auto res = std::from_chars(row[5].data(), row[5].data() + row[5].size(), r.seed);
    if (res.ec != std::errc() || res.ptr != row[5].data() + row[5].size()) {
      throw FormatError(path.string() + ": bad seed '" + row[5] + "'");
    }
    r.config_hash = row[6];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ticl::eval
