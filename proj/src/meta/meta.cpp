#include "ticl/meta/meta.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"
#include "ticl/eval/metrics.hpp"

namespace ticl::meta {
namespace {

constexpr std::uint64_t kSplitKey = 0x5e1a;

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ofstream open_output(const std::filesystem::path& path, std::string_view header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << header << '\n';
  return out;
}

std::size_t index_of(std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  names.push_back(name);
  return names.size() - 1;
}

}  // namespace

void TransferMatrix::validate() const {
  if (scores.size() != pretrain.size() * eval.size() || metric.size() != eval.size()) {
    throw DimensionError("transfer matrix: " + std::to_string(scores.size()) + " cells for " +
                         std::to_string(pretrain.size()) + " x " + std::to_string(eval.size()));
  }
  const std::set<std::string> train_names(pretrain.begin(), pretrain.end());
  for (const auto& e : eval) {
    if (train_names.count(e)) throw DataError("dataset '" + e + "' is in both the pre-training and evaluation sets");
  }
}

std::vector<std::optional<double>> TransferMatrix::mean_score() const {
  std::vector<std::optional<double>> out(pretrain.size());
  for (std::size_t p = 0; p < pretrain.size(); ++p) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t e = 0; e < eval.size(); ++e) {
      if (at(p, e)) {
        sum += *at(p, e);
        ++n;
      }
    }
    if (n > 0) out[p] = sum / static_cast<double>(n);
  }
  return out;
}

TransferMatrix matrix_from_records(std::span<const eval::ResultRecord> records,
                                   std::span<const std::string> preference) {
  static const std::vector<std::string> kDefault{"accuracy", "pearson"};
  if (preference.empty()) preference = kDefault;
  TransferMatrix m;
  std::map<std::string, std::size_t> chosen;  // eval -> preference position
  for (const auto& r : records) {
    const auto pos = std::find(preference.begin(), preference.end(), r.metric);
    if (pos == preference.end()) continue;
    index_of(m.pretrain, r.pretrain);
    index_of(m.eval, r.eval);
    const auto rank = static_cast<std::size_t>(pos - preference.begin());
    auto [it, fresh] = chosen.emplace(r.eval, rank);
    if (!fresh) it->second = std::min(it->second, rank);
  }
  for (const auto& e : m.eval) m.metric.push_back(preference[chosen.at(e)]);
  // Cell score: mean of the fold values that are present.
  std::vector<double> sum(m.pretrain.size() * m.eval.size(), 0.0);
  std::vector<std::size_t> count(sum.size(), 0);
  for (const auto& r : records) {
    const auto e = std::find(m.eval.begin(), m.eval.end(), r.eval);
    if (e == m.eval.end() || !r.value) continue;
    const auto ei = static_cast<std::size_t>(e - m.eval.begin());
    if (r.metric != m.metric[ei]) continue;
    const auto pi = static_cast<std::size_t>(std::find(m.pretrain.begin(), m.pretrain.end(), r.pretrain) -
                                             m.pretrain.begin());
    sum[pi * m.eval.size() + ei] += *r.value;
    count[pi * m.eval.size() + ei] += 1;
  }
  m.scores.assign(sum.size(), std::nullopt);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count[i] > 0) m.scores[i] = sum[i] / static_cast<double>(count[i]);
  }
  m.validate();
  return m;
}

std::vector<std::optional<double>> RankMatrix::average_rank() const {
  std::vector<std::optional<double>> out(rows);
  for (std::size_t p = 0; p < rows; ++p) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t e = 0; e < cols; ++e) {
      if (at(p, e)) {
        sum += *at(p, e);
        ++n;
      }
    }
    if (n > 0) out[p] = sum / static_cast<double>(n);
  }
  return out;
}

RankMatrix rank_per_eval(const TransferMatrix& matrix) {
  matrix.validate();
  RankMatrix r{matrix.pretrain.size(), matrix.eval.size(), {}};
  r.ranks.assign(matrix.scores.size(), std::nullopt);
  for (std::size_t e = 0; e < r.cols; ++e) {
    std::vector<std::size_t> rows;
    std::vector<double> negated;
    for (std::size_t p = 0; p < r.rows; ++p) {
      if (matrix.at(p, e)) {
        rows.push_back(p);
        negated.push_back(-*matrix.at(p, e));
      }
    }
    if (rows.empty()) throw DataError("evaluation '" + matrix.eval[e] + "' has no scores to rank");
    const auto ranks = eval::average_ranks(negated);
    for (std::size_t i = 0; i < rows.size(); ++i) r.ranks[rows[i] * r.cols + e] = ranks[i];
  }
  return r;
}

Histogram correlation_histogram(std::span<const double> values) {
  Histogram h;
  for (int i = 0; i <= 20; ++i) h.edges.push_back(-1.0 + 0.1 * i);
  h.counts.assign(20, 0);
  for (const double v : values) {
    // The epsilon keeps values sitting on an edge in the upper bin.
    const auto bin = static_cast<long>(std::floor((v + 1.0) * 10.0 + 1e-9));
    h.counts[static_cast<std::size_t>(std::clamp(bin, 0L, 19L))] += 1;
  }
  return h;
}

PairCorrelations pairwise_rank_correlation(const RankMatrix& ranks) {
  if (ranks.cols < 2) throw DataError("rank correlation needs at least two evaluation datasets");
  PairCorrelations out;
  std::vector<double> values;
  for (std::size_t a = 0; a < ranks.cols; ++a) {
    for (std::size_t b = a + 1; b < ranks.cols; ++b) {
      std::vector<double> ra, rb;
      for (std::size_t p = 0; p < ranks.rows; ++p) {
        if (ranks.at(p, a) && ranks.at(p, b)) {
          ra.push_back(*ranks.at(p, a));
          rb.push_back(*ranks.at(p, b));
        }
      }
      const auto rho = ra.size() >= 2 ? eval::spearman(ra, rb) : std::nullopt;
      if (!rho) {
        ++out.skipped;
        continue;
      }
      out.pairs.push_back({a, b, *rho});
      values.push_back(*rho);
    }
  }
  out.histogram = correlation_histogram(values);
  return out;
}

DomainGrid domain_matrix(const RankMatrix& ranks, std::span<const data::Domain> train_domains,
                         std::span<const data::Domain> eval_domains) {
  if (train_domains.size() != ranks.rows || eval_domains.size() != ranks.cols) {
    throw DimensionError("domain tags do not match the rank matrix shape");
  }
  DomainGrid g;
  for (const auto d : data::all_domains()) {
    if (std::find(train_domains.begin(), train_domains.end(), d) != train_domains.end()) g.train_domains.push_back(d);
    if (std::find(eval_domains.begin(), eval_domains.end(), d) != eval_domains.end()) g.eval_domains.push_back(d);
  }
  const std::size_t nt = g.train_domains.size(), ne = g.eval_domains.size();
  std::vector<double> sum(nt * ne, 0.0);
  g.count.assign(nt * ne, 0);
  auto pos = [](const std::vector<data::Domain>& v, data::Domain d) {
    return static_cast<std::size_t>(std::find(v.begin(), v.end(), d) - v.begin());
  };
  for (std::size_t p = 0; p < ranks.rows; ++p) {
    for (std::size_t e = 0; e < ranks.cols; ++e) {
      if (!ranks.at(p, e)) continue;
      const std::size_t cell = pos(g.train_domains, train_domains[p]) * ne + pos(g.eval_domains, eval_domains[e]);
      sum[cell] += *ranks.at(p, e);
      g.count[cell] += 1;
    }
  }
  g.mean_rank.assign(nt * ne, std::nullopt);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (g.count[i] > 0) g.mean_rank[i] = sum[i] / static_cast<double>(g.count[i]);
  }
  return g;
}

MetaFeatures extract_meta_features(const data::Table& table, const train::Checkpoint& checkpoint) {
  if (checkpoint.table != table.name()) {
    throw ConfigError("checkpoint was trained on '" + checkpoint.table + "', not '" + table.name() + "'");
  }
  MetaFeatures m;
  m.dataset = table.name();
  m.n_features = static_cast<double>(table.column_count());
  m.n_instances = static_cast<double>(table.row_count());
  m.n_categorical = static_cast<double>(table.categorical_count());
  m.n_numeric = static_cast<double>(table.numeric_count());
  m.missing_fraction = table.missing_fraction();
  m.final_cls_loss = checkpoint.final_cls_loss;
  m.final_reg_loss = checkpoint.final_reg_loss;
  return m;
}

MetaDataset meta_dataset(std::span<const MetaFeatures> features, std::span<const double> scores) {
  if (features.size() != scores.size()) {
    throw DimensionError(std::to_string(features.size()) + " meta-feature rows for " +
                         std::to_string(scores.size()) + " scores");
  }
  MetaDataset d;
  d.names = {"n_features", "n_instances", "n_categorical", "n_numeric",
             "missing_fraction", "final_cls_loss", "final_reg_loss"};
  auto loss_mean = [&](auto field) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& f : features) {
      if (const auto& v = f.*field) {
        sum += *v;
        ++n;
      }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
  };
  const double cls_fill = loss_mean(&MetaFeatures::final_cls_loss);
  const double reg_fill = loss_mean(&MetaFeatures::final_reg_loss);
  std::vector<double> v;
  for (const auto& f : features) {
    d.datasets.push_back(f.dataset);
    v.insert(v.end(), {f.n_features, f.n_instances, f.n_categorical, f.n_numeric, f.missing_fraction,
                       f.final_cls_loss.value_or(cls_fill), f.final_reg_loss.value_or(reg_fill)});
  }
  d.x = trees::Matrix(features.size(), d.names.size(), std::move(v));
  d.scores.assign(scores.begin(), scores.end());
  return d;
}

MetaDataset reference_dataset(std::span<const data::ReferenceRecord> records, bool domain_onehot) {
  MetaDataset d;
  d.names = {"n_instances", "n_features"};
  std::vector<data::Domain> present;
  if (domain_onehot) {
    for (const auto dom : data::all_domains()) {
      if (std::any_of(records.begin(), records.end(), [&](const auto& r) { return r.domain == dom; })) {
        present.push_back(dom);
        d.names.push_back("domain_" + std::string(data::domain_name(dom)));
      }
    }
  }
  std::vector<double> v;
  for (const auto& r : records) {
    d.datasets.push_back(r.dataset);
    v.push_back(static_cast<double>(r.instances));
    v.push_back(static_cast<double>(r.features));
    for (const auto dom : present) v.push_back(r.domain == dom ? 1.0 : 0.0);
    d.scores.push_back(r.score);
  }
  d.x = trees::Matrix(records.size(), d.names.size(), std::move(v));
  return d;
}

MetaRegression fit_meta_regressor(const MetaDataset& data, std::uint64_t seed, const trees::BoostParams& params) {
  const std::size_t n = data.x.rows;
  if (n < 10) throw DataError("meta-regressor needs at least 10 datasets, got " + std::to_string(n));
  if (data.scores.size() != n) throw DimensionError("meta-regressor: scores do not match rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  core::Rng rng = core::make_stream(seed, kSplitKey);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n))));
  const std::size_t n_train = n - n_test;

  auto take = [&](std::size_t begin, std::size_t end, std::vector<double>& y) {
    std::vector<double> v;
    for (std::size_t i = begin; i < end; ++i) {
      const double* row = data.x.row(order[i]);
      v.insert(v.end(), row, row + data.x.cols);
      y.push_back(data.scores[order[i]]);
    }
    return trees::Matrix(end - begin, data.x.cols, std::move(v));
  };
  std::vector<double> y_train, y_test;
  const auto x_train = take(0, n_train, y_train);
  const auto x_test = take(n_train, n, y_test);

  const auto model = trees::fit_boosted(x_train, y_train, params);
  MetaRegression out;
  out.names = data.names;
  out.train_rows = n_train;
  out.test_rows = n_test;
  out.importances = model.importances();
  const auto r2 = eval::r2(model.predict(x_test), y_test);
  if (r2 && !model.trees().empty()) {
    out.r2 = *r2;
  } else {
    out.degenerate = true;
  }
  return out;
}

void write_pairs(const std::filesystem::path& path, const TransferMatrix& matrix, const PairCorrelations& pairs) {
  auto out = open_output(path, "eval_a,eval_b,spearman");
  for (const auto& p : pairs.pairs) out << matrix.eval[p.a] << ',' << matrix.eval[p.b] << ',' << fmt(p.spearman) << '\n';
}

void write_histogram(const std::filesystem::path& path, const Histogram& histogram) {
  auto out = open_output(path, "lower,upper,count");
  for (std::size_t i = 0; i < histogram.counts.size(); ++i) {
    out << fmt(histogram.edges[i]) << ',' << fmt(histogram.edges[i + 1]) << ',' << histogram.counts[i] << '\n';
  }
}

void write_domain_grid(const std::filesystem::path& path, const DomainGrid& grid) {
  auto out = open_output(path, "train_domain,eval_domain,mean_rank,count");
  const std::size_t ne = grid.eval_domains.size();
  for (std::size_t t = 0; t < grid.train_domains.size(); ++t) {
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& m = grid.mean_rank[t * ne + e];
      out << data::domain_name(grid.train_domains[t]) << ',' << data::domain_name(grid.eval_domains[e]) << ','
          << (m ? fmt(*m) : "NA") << ',' << grid.count[t * ne + e] << '\n';
    }
  }
}

void write_importances(const std::filesystem::path& path, const MetaRegression& regression) {
  auto out = open_output(path, "meta_feature,importance");
  for (std::size_t i = 0; i < regression.names.size(); ++i) {
    out << regression.names[i] << ',' << fmt(regression.importances[i]) << '\n';
  }
}

void write_ranks(const std::filesystem::path& path, const TransferMatrix& matrix, const RankMatrix& ranks) {
  auto out = open_output(path, "pretrain,eval,metric,score,rank");
  for (std::size_t p = 0; p < ranks.rows; ++p) {
    for (std::size_t e = 0; e < ranks.cols; ++e) {
      const auto& s = matrix.at(p, e);
      const auto& r = ranks.at(p, e);
      out << matrix.pretrain[p] << ',' << matrix.eval[e] << ',' << matrix.metric[e] << ','
          << (s ? fmt(*s) : "NA") << ',' << (r ? fmt(*r) : "NA") << '\n';
    }
  }
}

}  // namespace ticl::meta
