#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "doctest.h"
#include "ticl/core/errors.hpp"
#include "ticl/tasks/ablation.hpp"
#include "ticl/tasks/episode.hpp"
#include "ticl/tasks/task_space.hpp"

using namespace ticl;
using namespace ticl::tasks;

namespace {

data::Column numeric(std::string name, std::vector<double> values) {
  data::Column col;
  col.name = std::move(name);
  col.kind = data::ColumnKind::kNumeric;
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

// k columns alternating numeric / categorical, `rows` rows of varied values.
data::Table synthetic_table(std::size_t k, std::size_t rows = 40, std::uint64_t seed = 1) {
  core::Rng rng = core::make_stream(seed, 99);
  std::normal_distribution<double> gauss;
  std::vector<data::Column> cols;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(rows);
    if (c % 2 == 0) {
      for (auto& x : v) x = gauss(rng);
      cols.push_back(numeric("n" + std::to_string(c), v));
    } else {
      for (std::size_t r = 0; r < rows; ++r) v[r] = static_cast<double>(r % 3);
      cols.push_back(categorical("c" + std::to_string(c), v, 3));
    }
  }
  return data::Table("synthetic" + std::to_string(k), data::Domain::kOther, std::move(cols));
}

using TaskKey = std::tuple<std::size_t, std::string>;

// Brute force over every (target, column subset) pair.
std::set<TaskKey> brute_force_tasks(std::size_t k) {
  std::set<TaskKey> out;
  for (std::size_t t = 0; t < k; ++t) {
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << k); ++m) {
      if ((m >> t) & 1U) continue;
      if (m == 0) continue;
      std::string bits(k, '0');
      for (std::size_t c = 0; c < k; ++c) {
        if ((m >> c) & 1U) bits[c] = '1';
      }
      out.emplace(t, bits);
    }
  }
  return out;
}

std::set<TaskKey> keys(const std::vector<Task>& tasks) {
  std::set<TaskKey> out;
  for (const auto& t : tasks) out.emplace(t.target, t.features.to_string());
  return out;
}

}  // namespace

TEST_CASE("count_tasks small cases") {
  CHECK(count_tasks(1, std::size_t{1}) == 0);
  CHECK(count_tasks(3, std::size_t{3}) == 9);
  CHECK(count_tasks(4, std::size_t{4}) == 28);
  CHECK(count_tasks(4, std::size_t{2}) == 14);
  CHECK(count_tasks(4, std::size_t{0}) == 0);
}

TEST_CASE("count_tasks saturates at the cap") {
  CHECK(count_tasks(62, std::size_t{62}) == kTaskCountCap);
  CHECK(count_tasks(63, std::size_t{1}) == kTaskCountCap);
  CHECK(count_tasks(500, std::size_t{500}) == kTaskCountCap);
  // 2^60 - 1 per target fits four times but not five.
  CHECK(count_tasks(61, std::size_t{1}) == (std::uint64_t{1} << 60) - 1);
  CHECK(count_tasks(61, std::size_t{4}) == kTaskCountCap - 4);
  CHECK(count_tasks(61, std::size_t{5}) == kTaskCountCap);
}

TEST_CASE("count and enumeration match brute force for k up to 12") {
  for (std::size_t k = 1; k <= 12; ++k) {
    const auto oracle = brute_force_tasks(k);
    CHECK(count_tasks(k, k) == oracle.size());
    if (k < 2) continue;
    const auto table = synthetic_table(k);
    const auto listed = enumerate_tasks(table);
    CHECK(listed.size() == oracle.size());
    CHECK(keys(listed) == oracle);
  }
}

TEST_CASE("budget covering the space yields the full enumeration") {
  const auto table = synthetic_table(3);
  const auto space = build_task_space(table, 100, 5);
  CHECK(space.total == 9);
  CHECK(space.tasks.size() == 9);
  CHECK(keys(space.tasks) == brute_force_tasks(3));
}

TEST_CASE("budgeted lists are distinct, deterministic and prefix nested") {
  for (const std::size_t k : {6, 9, 12, 45}) {
    const auto table = synthetic_table(k, 30, k);
    std::vector<Task> previous;
    for (const auto budget : kBudgetGrid) {
      if (budget > 5000) continue;
      const auto a = build_task_space(table, budget, 11);
      const auto b = build_task_space(table, budget, 11);
      CHECK(a.tasks == b.tasks);
      CHECK(a.tasks.size() == std::min<std::uint64_t>(budget, a.total));
      CHECK(keys(a.tasks).size() == a.tasks.size());
      REQUIRE(previous.size() <= a.tasks.size());
      CHECK(std::equal(previous.begin(), previous.end(), a.tasks.begin()));
      for (const auto& t : a.tasks) CHECK_NOTHROW(validate_task(table, t));
      previous = a.tasks;
    }
    CHECK(build_task_space(table, 50, 12).tasks != build_task_space(table, 50, 11).tasks);
  }
}

TEST_CASE("task space rejects tiny tables and zero budget") {
  const auto one = synthetic_table(1);
  CHECK_THROWS_AS(build_task_space(one, 5, 0), ConfigError);
  CHECK_THROWS_AS(build_task_space(synthetic_table(3), 0, 0), ConfigError);
}

TEST_CASE("head kind follows the column kind, not the value count") {
  auto table = data::Table("t", data::Domain::kOther,
                           {numeric("x", {0, 1, 0, 1}), categorical("c", {0, 1, 1, 0}, 2),
                            categorical("one", {0, 0, 0, 0}, 1)});
  CHECK(target_head(table.column(0)) == HeadKind::kRegression);
  CHECK(target_head(table.column(1)) == HeadKind::kClassification);
  CHECK_FALSE(target_head(table.column(2)).has_value());
  CHECK(eligible_targets(table) == std::vector<std::size_t>{0, 1});
  CHECK(count_tasks(table.column_count(), eligible_targets(table)) == 6);
}

TEST_CASE("target scaler hand values") {
  const std::vector<double> y{2, 4, 4, 4};
  const auto s = TargetScaler::fit(y);
  CHECK(s.mean == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(s.std == doctest::Approx(std::sqrt(0.75)).epsilon(1e-15));
  CHECK(s.forward(2) == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-14));
  CHECK(s.forward(4) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(s.inverse(s.forward(7.25)) == doctest::Approx(7.25).epsilon(1e-14));
  CHECK_THROWS_AS(TargetScaler::fit(std::vector<double>{3, 3, 3}), EpisodeRejected);
}

TEST_CASE("six-row regression episode matches hand preprocessing") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> z{10, 10, 10, 10, 10, 10};
  const std::vector<double> y{2, 4, 4, 4, 5, 9};
  const auto table = data::Table("six", data::Domain::kOther,
                                 {numeric("x", x), numeric("z", z), numeric("y", y)});
  Task task{"six", 2, FeatureMask(3), HeadKind::kRegression};
  task.features.set(0);
  task.features.set(1);
  const EpisodeConfig cfg{4, 2, 8, 10};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    core::Rng rng = core::make_stream(seed, 1);
    Episode ep;
    try {
      ep = build_episode(table, task, cfg, rng);
    } catch (const EpisodeRejected&) {
      continue;
    }
    REQUIRE(ep.context_size() == 4);
    REQUIRE(ep.query_size() == 2);
    std::set<std::size_t> all(ep.context_rows.begin(), ep.context_rows.end());
    all.insert(ep.query_rows.begin(), ep.query_rows.end());
    CHECK(all.size() == 6);

    double mx = 0, my = 0;
    for (const auto r : ep.context_rows) {
      mx += x[r] / 4;
      my += y[r] / 4;
    }
    double vx = 0, vy = 0;
    for (const auto r : ep.context_rows) {
      vx += (x[r] - mx) * (x[r] - mx) / 4;
      vy += (y[r] - my) * (y[r] - my) / 4;
    }
    const double gain = 8.0 / 2.0;
    auto check_row = [&](const std::vector<double>& m, std::size_t i, std::size_t r) {
      CHECK(m[i * 8 + 0] == doctest::Approx((x[r] - mx) / std::sqrt(vx) * gain).epsilon(1e-12));
      // Constant column is exactly zero, as is the padding.
      for (std::size_t c = 1; c < 8; ++c) CHECK(m[i * 8 + c] == 0.0);
    };
    for (std::size_t i = 0; i < 4; ++i) {
      check_row(ep.context_x, i, ep.context_rows[i]);
      CHECK(ep.context_y[i] ==
            doctest::Approx((y[ep.context_rows[i]] - my) / std::sqrt(vy)).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < 2; ++i) {
      check_row(ep.query_x, i, ep.query_rows[i]);
      CHECK(ep.query_y[i] ==
            doctest::Approx((y[ep.query_rows[i]] - my) / std::sqrt(vy)).epsilon(1e-12));
    }
    double m = 0, v = 0;
    for (const double t : ep.context_y) m += t / 4;
    for (const double t : ep.context_y) v += (t - m) * (t - m) / 4;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(std::sqrt(v) - 1) < 1e-3);
  }
}

TEST_CASE("classification episode remaps codes by context frequency") {
  // Class 2 is most frequent, then 0, then 1 (ties to lower code).
  const std::vector<double> codes{2, 2, 2, 0, 0, 1, 1, 3, 2, 0};
  const auto remap = ClassRemap::fit(codes, 3);
  CHECK(remap.source_of == std::vector<std::size_t>{2, 0, 1});
  CHECK(remap.map(2) == 0);
  CHECK(remap.map(0) == 1);
  CHECK(remap.map(1) == 2);
  CHECK(remap.map(3) == -1);
  CHECK_THROWS_AS(ClassRemap::fit(std::vector<double>{1, 1, 1}, 10), EpisodeRejected);
}

TEST_CASE("episodes from a wide table are finite and padded") {
  const auto table = synthetic_table(45, 200, 3);
  const auto space = build_task_space(table, 50, 4);
  const EpisodeConfig cfg{64, 16, 32, 10};
  std::size_t built = 0;
  for (std::size_t i = 0; i < space.tasks.size(); ++i) {
    core::Rng rng = core::make_stream(9, i);
    Episode ep;
    try {
      ep = build_episode(table, space.tasks[i], cfg, rng);
    } catch (const EpisodeRejected&) {
      continue;
    }
    ++built;
    CHECK(ep.active_features == std::min<std::size_t>(32, space.tasks[i].features.count()));
    for (const auto* m : {&ep.context_x, &ep.query_x}) {
      for (std::size_t j = 0; j < m->size(); ++j) {
        CHECK(std::isfinite((*m)[j]));
        if (j % 32 >= ep.active_features) CHECK((*m)[j] == 0.0);
      }
    }
    if (ep.head == HeadKind::kClassification) {
      for (const double y : ep.context_y) CHECK(y < static_cast<double>(ep.classes));
      for (const double y : ep.query_y) CHECK(y < static_cast<double>(ep.classes));
    }
  }
  CHECK(built > 40);
}

TEST_CASE("missing feature cells are imputed to zero") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto table = data::Table(
      "gaps", data::Domain::kOther,
      {numeric("a", {1, nan, 3, 5, nan, 2, 8, 1}), numeric("y", {1, 2, 3, 4, 5, 6, 7, 8})});
  Task task{"gaps", 1, FeatureMask(2), HeadKind::kRegression};
  task.features.set(0);
  core::Rng rng = core::make_stream(0, 0);
  const auto ep = build_episode(table, task, EpisodeConfig{6, 2, 4, 10}, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    if (ep.context_rows[i] == 1 || ep.context_rows[i] == 4) CHECK(ep.context_x[i * 4] == 0.0);
  }
  for (const double v : ep.context_x) CHECK(std::isfinite(v));
}

TEST_CASE("episode preconditions") {
  const auto table = synthetic_table(4, 10);
  const auto space = build_task_space(table, 5, 1);
  core::Rng rng = core::make_stream(0, 0);
  CHECK_THROWS_AS(build_episode(table, space.tasks[0], EpisodeConfig{8, 8, 4, 10}, rng),
                  ConfigError);
  Task bad = space.tasks[0];
  bad.features.set(bad.target);
  CHECK_THROWS_AS(build_episode(table, bad, EpisodeConfig{4, 2, 4, 10}, rng), ConfigError);
}

TEST_CASE("ablation drop counts and determinism") {
  const auto table = synthetic_table(10, 50);
  CHECK(ablate_table(table, AblationAxis::kColumns, 0.7, 3).column_count() == 3);
  CHECK(ablate_table(table, AblationAxis::kRows, 0.7, 3).row_count() == 15);
  const auto same = ablate_table(table, AblationAxis::kColumns, 0.0, 3);
  CHECK(same.column_count() == 10);
  for (std::size_t c = 0; c < 10; ++c) CHECK(same.column(c).name == table.column(c).name);
  CHECK(ablate_table(table, AblationAxis::kColumns, 0.99, 3).column_count() == 1);
  CHECK_THROWS_AS(ablate_table(table, AblationAxis::kRows, 1.0, 3), ConfigError);
  CHECK_THROWS_AS(ablate_table(table, AblationAxis::kRows, -0.1, 3), ConfigError);
  const auto a = ablate_table(table, AblationAxis::kRows, 0.5, 8);
  const auto b = ablate_table(table, AblationAxis::kRows, 0.5, 8);
  CHECK(a.column(0).values == b.column(0).values);
}

TEST_CASE("ablation sweep grid yields 19 distinct tables") {
  const auto table = synthetic_table(10, 50);
  std::set<std::pair<std::size_t, std::size_t>> shapes;
  for (int i = 0; i <= 9; ++i) {
    const double f = i / 10.0;
    for (const auto axis : {AblationAxis::kRows, AblationAxis::kColumns}) {
      const auto t = ablate_table(table, axis, f, 2);
      shapes.emplace(t.row_count(), t.column_count());
    }
  }
  CHECK(shapes.size() == 19);
}
