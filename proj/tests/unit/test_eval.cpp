#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"
#include "ticl/eval/harness.hpp"
#include "ticl/eval/metrics.hpp"

using namespace ticl;
using namespace ticl::eval;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& pos) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> counted_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (const double w : v) {
      less += w < v[i] ? 1 : 0;
      equal += w == v[i] ? 1 : 0;
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

double plain_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - sa / n, db = b[i] - sb / n;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

data::Column numeric(std::string name, std::vector<double> values) {
  data::Column col;
  col.name = std::move(name);
  for (const double v : values) col.missing.push_back(std::isnan(v) ? 1 : 0);
  col.values = std::move(values);
  return col;
}

data::Column categorical(std::string name, std::vector<double> codes, std::size_t levels) {
  data::Column col;
  col.name = std::move(name);
  col.kind = data::ColumnKind::kCategorical;
  for (std::size_t i = 0; i < levels; ++i) col.levels.push_back("l" + std::to_string(i));
  for (const double v : codes) col.missing.push_back(v == static_cast<double>(levels) ? 1 : 0);
  col.values = std::move(codes);
  return col;
}

// Binary label driven by the first two features; a few missing cells.
data::Table labelled_table(std::size_t rows, std::uint64_t seed, bool regression = false) {
  core::Rng rng = core::make_stream(seed, 3);
  std::normal_distribution<double> g;
  std::vector<double> a, b, c, y;
  for (std::size_t r = 0; r < rows; ++r) {
    a.push_back(g(rng));
    b.push_back(g(rng));
    c.push_back(r % 17 == 0 ? NAN : g(rng));
    const double signal = a.back() - 0.5 * b.back() + 0.3 * g(rng);
    y.push_back(regression ? signal : (signal > 0 ? 1.0 : 0.0));
  }
  std::vector<data::Column> cols{numeric("a", a), numeric("b", b), numeric("c", c),
                                 regression ? numeric("y", y) : categorical("y", y, 2)};
  return data::Table("labelled", data::Domain::kOther, std::move(cols));
}

}  // namespace

TEST_CASE("AUC matches exhaustive pair counting on 1000 random instances") {
  core::Rng rng = core::make_stream(7, 1);
  std::uniform_int_distribution<int> size(2, 12), coarse(0, 4);
  double worst = 0;
  for (int instance = 0; instance < 1000; ++instance) {
    const auto n = static_cast<std::size_t>(size(rng));
    std::vector<double> s(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse(rng) * 0.25;
      pos[i] = coarse(rng) < 2 ? 1 : 0;
    }
    const auto got = auc_binary(s, pos);
    const bool both = std::count(pos.begin(), pos.end(), 1) > 0 && std::count(pos.begin(), pos.end(), 0) > 0;
    REQUIRE(got.has_value() == both);
    if (both) worst = std::max(worst, std::abs(*got - pairwise_auc(s, pos)));
  }
  CHECK(worst <= 1e-12);

  const std::vector<double> six{0.1, 0.4, 0.4, 0.8, 0.3, 0.9};
  const std::vector<std::uint8_t> lab{0, 1, 0, 1, 0, 1};
  CHECK(*auc_binary(six, lab) == doctest::Approx(pairwise_auc(six, lab)).epsilon(1e-15));
  CHECK(*auc_binary(six, lab) == doctest::Approx(8.5 / 9));
}

TEST_CASE("AUC basics and monotone invariance") {
  const std::vector<double> s{0, 1, 0, 1, 1};
  const std::vector<std::uint8_t> p{0, 1, 0, 1, 1};
  CHECK(*auc_binary(s, p) == 1.0);
  CHECK_FALSE(auc_binary(s, std::vector<std::uint8_t>(5, 1)).has_value());

  core::Rng rng = core::make_stream(8, 1);
  std::normal_distribution<double> g;
  std::vector<double> x(40), tx(40);
  std::vector<std::uint8_t> lab(40);
  for (std::size_t i = 0; i < 40; ++i) {
    x[i] = g(rng);
    tx[i] = std::exp(3 * x[i]) - 7;
    lab[i] = g(rng) + x[i] > 0 ? 1 : 0;
  }
  CHECK(*auc_binary(x, lab) == *auc_binary(tx, lab));

  // Three classes: macro mean of one-vs-rest AUCs; an absent class is skipped.
  const std::vector<double> probs{0.7, 0.2, 0.1, 0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.4, 0.4, 0.2};
  const std::vector<double> truth{0, 1, 2, 1};
  double manual = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> sc;
    std::vector<std::uint8_t> pc;
    for (std::size_t r = 0; r < 4; ++r) {
      sc.push_back(probs[r * 3 + c]);
      pc.push_back(truth[r] == static_cast<double>(c) ? 1 : 0);
    }
    manual += pairwise_auc(sc, pc) / 3;
  }
  CHECK(*auc_ovr(probs, truth, 3) == doctest::Approx(manual).epsilon(1e-14));
  const std::vector<double> two{0, 1, 0, 1};
  const std::vector<double> two_probs{0.9, 0.1, 0.0, 0.2, 0.8, 0.0, 0.6, 0.4, 0.0, 0.3, 0.7, 0.0};
  CHECK(*auc_ovr(two_probs, two, 3) == 1.0);
  CHECK_FALSE(auc_ovr(two_probs, std::vector<double>(4, 1.0), 3).has_value());
  CHECK(*accuracy(probs, truth, 3) == 0.75);
}

TEST_CASE("Spearman matches its rank-Pearson definition with ties") {
  core::Rng rng = core::make_stream(9, 1);
  std::uniform_int_distribution<int> coarse(0, 5);
  for (int instance = 0; instance < 200; ++instance) {
    std::vector<double> a(15), b(15);
    for (std::size_t i = 0; i < 15; ++i) {
      a[i] = coarse(rng);
      b[i] = coarse(rng) + 0.5 * a[i];
    }
    const auto got = spearman(a, b);
    const auto ra = counted_ranks(a), rb = counted_ranks(b);
    if (!got) {
      CHECK((std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; }) ||
             std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; })));
      continue;
    }
    CHECK(*got == doctest::Approx(plain_pearson(ra, rb)).epsilon(1e-12));
  }
  const std::vector<double> up{1, 2, 3, 4, 5}, down{9, 7, 5, 3, 1};
  CHECK(*spearman(up, down) == -1.0);
  CHECK(*pearson(up, up) == doctest::Approx(1.0));
  CHECK(average_ranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("R2 of the mean predictor is exactly zero") {
  const std::vector<double> y{1, 2, 4, 8};
  const std::vector<double> mean(4, 3.75);
  CHECK(*r2(mean, y) == 0.0);
  CHECK(*r2(y, y) == 1.0);
  CHECK_FALSE(r2(y, std::vector<double>(4, 2.0)).has_value());
  CHECK_FALSE(pearson(mean, y).has_value());
  CHECK_THROWS_AS(r2(std::vector<double>{1}, y), DimensionError);
}

TEST_CASE("retrieval matches a brute-force distance sort") {
  // Five 2-D points; (1,0) and (0,1) tie from the origin.
  const std::vector<double> pool{3, 3, 1, 0, 0, 1, 0.1, 0.1, -2, 0};
  const std::vector<double> origin{0, 0};
  CHECK(retrieve_context(pool, 2, origin, 3) == std::vector<std::size_t>{3, 1, 2});
  CHECK(retrieve_context(pool, 2, origin, 5) == std::vector<std::size_t>{3, 1, 2, 4, 0});
  const std::vector<double> same{-2, 0};
  CHECK(retrieve_context(pool, 2, same, 1) == std::vector<std::size_t>{4});
  CHECK_THROWS_AS(retrieve_context(pool, 2, origin, 6), DimensionError);

  core::Rng rng = core::make_stream(10, 1);
  std::uniform_int_distribution<int> coarse(-2, 2);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(30 * 3), q(3);
    for (auto& v : p) v = coarse(rng);
    for (auto& v : q) v = coarse(rng);
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t r = 0; r < 30; ++r) {
      double d = 0;
      for (std::size_t c = 0; c < 3; ++c) d += (p[r * 3 + c] - q[c]) * (p[r * 3 + c] - q[c]);
      oracle.push_back({d, r});
    }
    std::sort(oracle.begin(), oracle.end());
    const auto got = retrieve_context(p, 3, q, 7);
    for (std::size_t i = 0; i < 7; ++i) CHECK(got[i] == oracle[i].second);
  }
}

TEST_CASE("folds partition the labelled rows and are seeded") {
  auto table = labelled_table(100, 1);
  EvalProtocol protocol;
  protocol.seed = 4;
  const auto folds = make_folds(table, 3, protocol);
  REQUIRE(folds.size() == 3);
  for (const auto& f : folds) {
    CHECK(f.context.size() == 80);
    CHECK(f.query.size() == 20);
    std::vector<std::size_t> all = f.context;
    all.insert(all.end(), f.query.begin(), f.query.end());
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  }
  CHECK(folds[0].context != folds[1].context);
  CHECK(make_folds(table, 3, protocol)[2].query == folds[2].query);

  // Missing targets never enter a fold.
  auto cols = table.columns();
  cols[3].values[5] = 2;
  cols[3].missing[5] = 1;
  const data::Table holed("holed", data::Domain::kOther, cols);
  for (const auto& f : make_folds(holed, 3, protocol)) {
    CHECK(f.context.size() + f.query.size() == 99);
    CHECK(std::find(f.context.begin(), f.context.end(), 5) == f.context.end());
    CHECK(std::find(f.query.begin(), f.query.end(), 5) == f.query.end());
  }
  cols[3].values.assign(100, 2);
  cols[3].missing.assign(100, 1);
  const data::Table empty("empty", data::Domain::kOther, cols);
  CHECK_THROWS_AS(make_folds(empty, 3, protocol), DataError);
}

TEST_CASE("injected oracle predictions score perfectly") {
  Evaluation cls;
  cls.width = 2;
  for (int f = 0; f < 3; ++f) cls.folds.push_back({{1, 0, 0, 1, 0, 1}, {0, 1, 1}});
  const auto rc = score(cls, "e", "p");
  REQUIRE(rc.size() == 2);
  CHECK(rc[0].metric == MetricKind::kAccuracy);
  CHECK(rc[0].folds.size() == 3);
  CHECK(*rc[0].mean() == 1.0);
  CHECK(*rc[1].mean() == 1.0);

  Evaluation reg;
  reg.head = tasks::HeadKind::kRegression;
  for (int f = 0; f < 3; ++f) reg.folds.push_back({{1, 2, 5}, {1, 2, 5}});
  const auto rr = score(reg, "e", "p");
  REQUIRE(rr.size() == 3);
  for (const auto& r : rr) CHECK(*r.mean() == doctest::Approx(1.0));

  Evaluation single;
  single.width = 2;
  single.folds.push_back({{0.3, 0.7, 0.6, 0.4}, {1, 1}});
  CHECK_FALSE(score(single, "e", "p")[1].folds[0].has_value());
  CHECK_FALSE(score(single, "e", "p")[1].mean().has_value());
}

TEST_CASE("label-permutation null centres on 0.5") {
  core::Rng rng = core::make_stream(12, 1);
  std::uniform_real_distribution<double> u;
  Evaluation ev;
  ev.width = 2;
  for (int f = 0; f < 3; ++f) {
    FoldOutput out;
    for (int r = 0; r < 40; ++r) {
      const double label = r % 2;
      const double p = std::clamp(0.5 + 0.4 * (label - 0.5) + 0.3 * (u(rng) - 0.5), 0.0, 1.0);
      out.outputs.insert(out.outputs.end(), {1 - p, p});
      out.truth.push_back(label);
    }
    ev.folds.push_back(std::move(out));
  }
  const auto null = permutation_null(ev, 100, 3);
  CHECK(null.permutations == 100);
  CHECK(std::abs(null.mean - 0.5) <= 0.05);
  CHECK(null.sd > 0);
  CHECK(*score(ev, "e", "p")[1].mean() > null.mean + 3 * null.sd);
}

TEST_CASE("random-weight model AUC averages near chance") {
  const auto table = labelled_table(120, 2);
  model::ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_dim = 32;
  cfg.max_features = 4;
  cfg.max_classes = 4;
  EvalProtocol protocol;
  protocol.k = 32;
  double total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    protocol.seed = seed;
    const auto weights = model::Weights<float>::init(cfg, seed);
    const auto ev = run_model(weights, table, 3, protocol);
    total += *score(ev, "labelled", "random")[1].mean();
  }
  CHECK(std::abs(total / 50 - 0.5) <= 0.1);
}

TEST_CASE("model evaluation is deterministic and shares folds with baselines") {
  const auto table = labelled_table(150, 3);
  model::ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_dim = 32;
  cfg.max_features = 4;
  cfg.max_classes = 4;
  const auto weights = model::Weights<float>::init(cfg, 1);
  EvalProtocol protocol;
  protocol.k = 40;
  const auto a = run_model(weights, table, 3, protocol);
  const auto b = run_model(weights, table, 3, protocol);
  REQUIRE(a.folds.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) CHECK(a.folds[f].outputs == b.folds[f].outputs);

  const auto forest = run_baseline(Baseline::kForest, table, 3, protocol);
  const auto linear = run_baseline(Baseline::kLinear, table, 3, protocol);
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(forest.folds[f].truth == a.folds[f].truth);
    CHECK(linear.folds[f].truth == a.folds[f].truth);
  }
  CHECK(*score(linear, "labelled", "linear")[1].mean() > 0.9);
  CHECK(*score(forest, "labelled", "forest")[1].mean() > 0.85);

  const auto reg_table = labelled_table(150, 4, true);
  const auto ridge = score(run_baseline(Baseline::kLinear, reg_table, 3, protocol), "r", "ridge");
  CHECK(*ridge[0].mean() > 0.8);
  const auto icl = score(run_model(weights, reg_table, 3, protocol), "r", "random");
  REQUIRE(icl.size() == 3);
  for (const auto& r : icl) CHECK(r.mean().has_value());
}

TEST_CASE("constant retrieved regression targets predict the constant") {
  std::vector<double> x, y;
  for (int r = 0; r < 50; ++r) {
    x.push_back(r);
    y.push_back(r < 40 ? 2.5 : 9.0);
  }
  const data::Table table("flat", data::Domain::kOther, {numeric("x", x), numeric("y", y)});
  model::ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.ff_dim = 8;
  cfg.max_features = 2;
  cfg.max_classes = 2;
  EvalProtocol protocol;
  protocol.k = 3;
  protocol.folds = 1;
  const auto ev = run_model(model::Weights<float>::init(cfg, 0), table, 1, protocol);
  const auto folds = make_folds(table, 1, protocol);
  for (std::size_t q = 0; q < folds[0].query.size(); ++q) {
    if (folds[0].query[q] < 30) CHECK(ev.folds[0].outputs[q] == 2.5);
  }
}

TEST_CASE("results file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "ticl_results_test.csv";
  std::filesystem::remove(path);
  EvalResult r{"wine", "digits", MetricKind::kAucOvr, {0.75, std::nullopt, 0.25}};
  CHECK(*r.mean() == 0.5);
  const auto records = to_records(std::span(&r, 1), 7, "abc123");
  REQUIRE(records.size() == 3);
  append_results(path, records);
  append_results(path, records);
  const auto back = read_results(path);
  REQUIRE(back.size() == 6);
  CHECK(back[1].fold == 1);
  CHECK_FALSE(back[1].value.has_value());
  CHECK(*back[2].value == 0.25);
  CHECK(back[5].config_hash == "abc123");
  CHECK(back[5].seed == 7);
  std::filesystem::remove(path);
  CHECK(parse_metric("spearman") == MetricKind::kSpearman);
  CHECK_THROWS_AS(parse_metric("f1"), ConfigError);
}
