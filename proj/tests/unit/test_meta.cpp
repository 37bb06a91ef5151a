#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"
#include "ticl/eval/metrics.hpp"
#include "ticl/meta/meta.hpp"

using namespace ticl;
using namespace ticl::meta;

namespace {

TransferMatrix matrix(std::size_t rows, std::size_t cols, std::vector<std::optional<double>> scores) {
  TransferMatrix m;
  for (std::size_t p = 0; p < rows; ++p) m.pretrain.push_back("p" + std::to_string(p));
  for (std::size_t e = 0; e < cols; ++e) {
    m.eval.push_back("e" + std::to_string(e));
    m.metric.push_back("accuracy");
  }
  m.scores = std::move(scores);
  return m;
}

TransferMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, int levels = 0) {
  core::Rng rng = core::make_stream(seed, 4);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> coarse(0, std::max(levels, 1));
  std::vector<std::optional<double>> s;
  for (std::size_t i = 0; i < rows * cols; ++i) s.push_back(levels ? coarse(rng) * 0.1 : u(rng));
  return matrix(rows, cols, s);
}

MetaFeatures planted(double n_features, core::Rng& rng) {
  std::uniform_real_distribution<double> u;
  MetaFeatures f;
  f.dataset = "d" + std::to_string(static_cast<int>(n_features));
  f.n_features = n_features;
  f.n_instances = std::floor(100 + 5000 * u(rng));
  f.n_categorical = std::floor(n_features * u(rng));
  f.n_numeric = n_features - f.n_categorical;
  f.missing_fraction = 0.2 * u(rng);
  f.final_cls_loss = 0.5 + u(rng);
  f.final_reg_loss = 0.5 + u(rng);
  return f;
}

}  // namespace

TEST_CASE("per-eval ranks: best first, ties averaged") {
  const auto m = matrix(3, 1, {0.9, 0.7, 0.8});
  const auto r = rank_per_eval(m);
  CHECK(*r.at(0, 0) == 1);
  CHECK(*r.at(1, 0) == 3);
  CHECK(*r.at(2, 0) == 2);
  const auto tied = rank_per_eval(matrix(3, 1, {0.5, 0.9, 0.5}));
  CHECK(*tied.at(0, 0) == 2.5);
  CHECK(*tied.at(2, 0) == 2.5);
  const auto holed = rank_per_eval(matrix(3, 2, {0.1, std::nullopt, 0.2, 0.4, 0.3, 0.5}));
  CHECK_FALSE(holed.at(0, 1).has_value());
  CHECK(*holed.at(2, 1) == 1);
  CHECK(*holed.at(1, 1) == 2);
  CHECK_THROWS_AS(rank_per_eval(matrix(2, 1, {std::nullopt, std::nullopt})), DataError);
}

TEST_CASE("ranks match a brute-force sort and ignore monotone transforms") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_matrix(5, 4, seed);
    const auto r = rank_per_eval(m);
    for (std::size_t e = 0; e < 4; ++e) {
      std::vector<std::pair<double, std::size_t>> col;
      for (std::size_t p = 0; p < 5; ++p) col.push_back({-*m.at(p, e), p});
      std::sort(col.begin(), col.end());
      for (std::size_t i = 0; i < 5; ++i) CHECK(*r.at(col[i].second, e) == static_cast<double>(i + 1));
    }
    auto t = m;
    for (auto& s : t.scores) s = std::log(*s + 1e-3) * 3 + 2;
    CHECK(rank_per_eval(t).ranks == r.ranks);
  }
}

TEST_CASE("pairwise rank correlations") {
  const auto same = rank_per_eval(matrix(4, 2, {0.1, 0.1, 0.4, 0.4, 0.3, 0.3, 0.2, 0.2}));
  const auto pc = pairwise_rank_correlation(same);
  REQUIRE(pc.pairs.size() == 1);
  CHECK(pc.pairs[0].spearman == doctest::Approx(1.0));
  CHECK(pc.histogram.counts[19] == 1);

  const auto m = random_matrix(6, 3, 9);
  const auto r = rank_per_eval(m);
  const auto three = pairwise_rank_correlation(r);
  REQUIRE(three.pairs.size() == 3);
  for (const auto& p : three.pairs) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < 6; ++i) {
      a.push_back(*m.at(i, p.a));
      b.push_back(*m.at(i, p.b));
    }
    CHECK(p.spearman == doctest::Approx(*eval::spearman(a, b)).epsilon(1e-12));
  }

  // A column with a single distinct rank cannot be correlated.
  const auto flat = rank_per_eval(matrix(3, 3, {0.5, 0.1, 0.3, 0.5, 0.2, 0.2, 0.5, 0.3, 0.1}));
  const auto skipped = pairwise_rank_correlation(flat);
  CHECK(skipped.pairs.size() == 1);
  CHECK(skipped.skipped == 2);
  CHECK_THROWS_AS(pairwise_rank_correlation(rank_per_eval(matrix(2, 1, {0.1, 0.2}))), DataError);
}

TEST_CASE("histogram bins have width 0.1 over [-1, 1]") {
  const std::vector<double> v{-1.0, -0.95, -0.9, 0.0, 0.05, 0.999, 1.0};
  const auto h = correlation_histogram(v);
  REQUIRE(h.edges.size() == 21);
  CHECK(h.edges.front() == -1.0);
  CHECK(h.edges.back() == doctest::Approx(1.0));
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[10] == 2);
  CHECK(h.counts[19] == 2);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == v.size());
}

TEST_CASE("domain matrix") {
  using data::Domain;
  const auto m = random_matrix(4, 3, 3);
  const auto r = rank_per_eval(m);
  const std::vector<Domain> one_t(4, Domain::kOther), one_e(3, Domain::kOther);
  const auto grand = domain_matrix(r, one_t, one_e);
  REQUIRE(grand.mean_rank.size() == 1);
  CHECK(*grand.mean_rank[0] == doctest::Approx(2.5));
  CHECK(grand.count[0] == 12);

  const auto single = domain_matrix(rank_per_eval(matrix(1, 2, {0.3, 0.9})), std::vector<Domain>{Domain::kOther},
                                    std::vector<Domain>{Domain::kOther, Domain::kHumanBehaviour});
  for (const auto& v : single.mean_rank) CHECK(*v == 1.0);

  // Pre-training datasets from the planted domain score best everywhere.
  core::Rng rng = core::make_stream(5, 5);
  std::uniform_real_distribution<double> u;
  const std::vector<Domain> domains{Domain::kFinancialDemographic, Domain::kMedicalHumanSensor,
                                    Domain::kPhysicsAstronomy, Domain::kOther};
  std::vector<Domain> train, evals;
  std::vector<std::optional<double>> s;
  for (std::size_t p = 0; p < 12; ++p) train.push_back(domains[p % 4]);
  for (std::size_t e = 0; e < 8; ++e) evals.push_back(domains[e % 4]);
  for (std::size_t p = 0; p < 12; ++p) {
    for (std::size_t e = 0; e < 8; ++e) s.push_back(u(rng) * 0.5 + (train[p] == Domain::kPhysicsAstronomy ? 0.5 : 0.0));
  }
  const auto g = domain_matrix(rank_per_eval(matrix(12, 8, s)), train, evals);
  REQUIRE(g.train_domains.size() == 4);
  CHECK(std::accumulate(g.count.begin(), g.count.end(), std::size_t{0}) == 96);
  std::vector<double> row_mean(4, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t e = 0; e < 4; ++e) row_mean[t] += *g.mean_rank[t * 4 + e] / 4;
  }
  const auto best = std::min_element(row_mean.begin(), row_mean.end()) - row_mean.begin();
  CHECK(g.train_domains[static_cast<std::size_t>(best)] == Domain::kPhysicsAstronomy);
  CHECK_THROWS_AS(domain_matrix(r, one_e, one_e), DimensionError);
}

TEST_CASE("transfer matrix from results records") {
  std::vector<eval::ResultRecord> recs{
      {"a", "x", "accuracy", 0, 0.7, 0, "h"},  {"a", "x", "accuracy", 1, 0.9, 0, "h"},
      {"a", "x", "auc-ovr", 0, 0.9, 0, "h"},   {"b", "x", "accuracy", 0, 0.6, 0, "h"},
      {"b", "x", "accuracy", 1, std::nullopt, 0, "h"}, {"a", "y", "pearson", 0, 0.4, 0, "h"},
      {"a", "y", "r2", 0, 0.1, 0, "h"},        {"b", "y", "pearson", 0, std::nullopt, 0, "h"},
  };
  const auto m = matrix_from_records(recs);
  REQUIRE(m.pretrain == std::vector<std::string>{"a", "b"});
  REQUIRE(m.eval == std::vector<std::string>{"x", "y"});
  CHECK(m.metric == std::vector<std::string>{"accuracy", "pearson"});
  CHECK(*m.at(0, 0) == doctest::Approx(0.8));
  CHECK(*m.at(1, 0) == 0.6);
  CHECK(*m.at(0, 1) == 0.4);
  CHECK_FALSE(m.at(1, 1).has_value());
  CHECK(*m.mean_score()[0] == doctest::Approx(0.6));

  const std::vector<std::string> auc{"auc-ovr"};
  CHECK(*matrix_from_records(recs, auc).at(0, 0) == 0.9);
  recs.push_back({"x", "a", "accuracy", 0, 0.5, 0, "h"});
  CHECK_THROWS_AS(matrix_from_records(recs), DataError);
}

TEST_CASE("meta-features from a table and checkpoint") {
  std::vector<data::Column> cols;
  for (int c = 0; c < 45; ++c) {
    data::Column col;
    col.name = "c" + std::to_string(c);
    col.values.assign(7063, 1.0 * c);
    col.missing.assign(7063, 0);
    cols.push_back(std::move(col));
  }
  const data::Table wide("colleges", data::Domain::kOther, cols);
  train::Checkpoint ck;
  ck.table = "colleges";
  ck.final_cls_loss = 0.7;
  const auto f = extract_meta_features(wide, ck);
  CHECK(f.n_features == 45);
  CHECK(f.n_instances == 7063);
  CHECK(f.n_categorical + f.n_numeric == f.n_features);
  CHECK(f.missing_fraction == 0.0);
  CHECK(*f.final_cls_loss == 0.7);
  CHECK_FALSE(f.final_reg_loss.has_value());

  // 2 columns x 10 rows with 2 missing cells.
  data::Column a, b;
  a.name = "a";
  b.name = "b";
  a.values.assign(10, 1.0);
  a.missing.assign(10, 0);
  b.values.assign(10, 2.0);
  b.missing.assign(10, 0);
  a.values[3] = NAN;
  a.missing[3] = 1;
  b.values[7] = NAN;
  b.missing[7] = 1;
  const data::Table toy("toy", data::Domain::kOther, {a, b});
  ck.table = "toy";
  CHECK(extract_meta_features(toy, ck).missing_fraction == 0.1);
  ck.table = "other";
  CHECK_THROWS_AS(extract_meta_features(toy, ck), ConfigError);
}

TEST_CASE("meta-regressor recovers a planted dependence on feature count") {
  core::Rng rng = core::make_stream(6, 6);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::uniform_int_distribution<int> width(2, 200);
  std::vector<MetaFeatures> feats;
  std::vector<double> scores;
  for (int i = 0; i < 88; ++i) {
    feats.push_back(planted(width(rng), rng));
    scores.push_back(0.5 + 0.08 * std::log(feats.back().n_features) + noise(rng));
  }
  feats[3].final_reg_loss.reset();
  const auto data = meta_dataset(feats, scores);
  double others = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) others += i == 3 ? 0.0 : *feats[i].final_reg_loss;
  CHECK(data.x.at(3, 6) == doctest::Approx(others / 87));
  const auto fit = fit_meta_regressor(data, 1);
  CHECK(fit.test_rows == 18);
  CHECK(fit.r2 > 0.9);
  CHECK(fit.importances[0] > 0.9);
  CHECK(std::accumulate(fit.importances.begin(), fit.importances.end(), 0.0) == doctest::Approx(1.0));
  CHECK(fit_meta_regressor(data, 1).importances == fit.importances);

  const auto flat = fit_meta_regressor(meta_dataset(feats, std::vector<double>(88, 0.7)), 1);
  CHECK(flat.degenerate);
  CHECK(flat.r2 == 0.0);
  CHECK_THROWS_AS(fit_meta_regressor(meta_dataset(std::span(feats).first(9), std::span(scores).first(9)), 1),
                  DataError);
}

TEST_CASE("bundled reference records: feature count dominates") {
  const auto records = data::reference_records(data::Benchmark::kCc18);
  std::vector<double> nf, auc;
  for (const auto& r : records) {
    nf.push_back(static_cast<double>(r.features));
    auc.push_back(r.score);
  }
  CHECK(*eval::spearman(nf, auc) > 0);
  const auto fit = fit_meta_regressor(reference_dataset(records, true), 0);
  REQUIRE(fit.names[0] == "n_instances");
  CHECK(fit.importances[1] > fit.importances[0]);
}
