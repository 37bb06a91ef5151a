#include "ticl/experiment/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "ticl/core/grad_check.hpp"
#include "ticl/core/ops.hpp"
#include "ticl/data/manifest.hpp"
#include "ticl/data/reference.hpp"
#include "ticl/eval/metrics.hpp"
#include "ticl/meta/meta.hpp"
#include "ticl/model/model.hpp"
#include "ticl/tasks/task_space.hpp"
#include "ticl/train/trainer.hpp"
#include "ticl/trees/trees.hpp"

namespace ticl::experiment {
namespace {

using core::Tensor64;
namespace ops = core::ops;

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Tensor64 random_tensor(core::Shape shape, core::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(core::shape_size(shape));
  for (auto& x : v) x = g(rng);
  return Tensor64(std::move(shape), std::move(v));
}

// Fixed random projection to a scalar so every output coordinate matters.
Tensor64 project(const Tensor64& t, std::uint64_t seed) {
  core::Rng rng = core::make_stream(seed, 0x9a0);
  const auto m = t.rank() == 2 ? t : t.reshaped({1, t.size()});
  return ops::sum(ops::mul_row(m, random_tensor({m.cols()}, rng)));
}

model::ModelConfig tiny_model(std::size_t d, std::size_t layers) {
  model::ModelConfig c;
  c.embed_dim = d;
  c.layers = layers;
  c.heads = 2;
  c.ff_dim = 2 * d;
  c.max_features = 3;
  c.max_classes = 4;
  return c;
}

// Init plus noise so attention and head outputs are far from degenerate.
model::Weights<double> lively_weights(const model::ModelConfig& c, std::uint64_t seed) {
  auto w = model::Weights<double>::init(c, seed);
  core::Rng rng = core::make_stream(seed, 77);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& p : w.params) {
    std::vector<double> v(p.values().begin(), p.values().end());
    for (auto& x : v) x += g(rng);
    p = Tensor64(p.shape(), std::move(v));
  }
  return w;
}

tasks::Episode random_episode(const model::ModelConfig& c, std::size_t nc, std::size_t nq, tasks::HeadKind head,
                              std::uint64_t seed) {
  core::Rng rng = core::make_stream(seed, 3);
  std::normal_distribution<double> g;
  tasks::Episode ep;
  ep.head = head;
  ep.max_features = c.max_features;
  ep.active_features = c.max_features;
  ep.classes = head == tasks::HeadKind::kClassification ? 3 : 0;
  for (std::size_t i = 0; i < nc * c.max_features; ++i) ep.context_x.push_back(g(rng));
  for (std::size_t i = 0; i < nq * c.max_features; ++i) ep.query_x.push_back(g(rng));
  for (std::size_t i = 0; i < nc; ++i) {
    ep.context_y.push_back(head == tasks::HeadKind::kClassification ? double(i % 3) : g(rng));
  }
  for (std::size_t i = 0; i < nq; ++i) {
    ep.query_y.push_back(head == tasks::HeadKind::kClassification ? double((i + 1) % 3) : g(rng));
  }
  return ep;
}

// Row r of the query outputs: logits then the regression value.
std::vector<double> query_row(const model::Predictions<double>& p, std::size_t r) {
  std::vector<double> out;
  for (std::size_t j = 0; j < p.logits.cols(); ++j) out.push_back(p.logits.at(r, j));
  out.push_back(p.regression.at(r, 0));
  return out;
}

double row_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double gap = 0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return gap;
}

double pairwise_auc(std::span<const double> s, std::span<const std::uint8_t> pos) {
  double hits = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      pairs += 1;
      hits += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return hits / pairs;
}

// Ranks by counting: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> counted_ranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (const double x : v) {
      less += x < v[i] ? 1 : 0;
      equal += x == v[i] ? 1 : 0;
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

double plain_pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

data::Table synthetic_table(std::size_t k, std::size_t rows, std::uint64_t seed) {
  core::Rng rng = core::make_stream(seed, 99);
  std::normal_distribution<double> g;
  std::vector<data::Column> cols;
  for (std::size_t c = 0; c < k; ++c) {
    data::Column col;
    col.name = "c" + std::to_string(c);
    col.missing.assign(rows, 0);
    if (c % 2 == 0) {
      for (std::size_t r = 0; r < rows; ++r) col.values.push_back(g(rng));
    } else {
      col.kind = data::ColumnKind::kCategorical;
      col.levels = {"a", "b", "c"};
      for (std::size_t r = 0; r < rows; ++r) col.values.push_back(static_cast<double>(r % 3));
    }
    cols.push_back(std::move(col));
  }
  return data::Table("synthetic" + std::to_string(k), data::Domain::kOther, std::move(cols));
}

struct Blobs {
  trees::Matrix x;
  std::vector<double> y;
};

Blobs blobs(std::size_t n, std::uint64_t seed, double gap) {
  core::Rng rng = core::make_stream(seed, 1);
  std::normal_distribution<double> g;
  Blobs b;
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    const double label = static_cast<double>(i % 2);
    v.push_back(g(rng) + gap * label);
    v.push_back(g(rng));
    b.y.push_back(label);
  }
  b.x = trees::Matrix(n, 2, v);
  return b;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

CheckResult check_gradients() {
  CheckResult out{"gradients", true, ""};
  core::Rng rng = core::make_stream(6, 6);
  const std::vector<std::size_t> idx{2, 0, 2, 1};
  const std::vector<std::size_t> targets{1, 0, 2};
  const std::vector<std::uint8_t> allowed{1, 1, 0, 1, 0, 1, 1, 1, 0, 1, 0, 1, 1, 1, 1};
  struct Case {
    std::string name;
    std::vector<Tensor64> params;
    core::Fragment fn;
  };
  std::vector<Case> cases;
  auto add = [&](std::string name, std::vector<Tensor64> params, core::Fragment fn) {
    cases.push_back({std::move(name), std::move(params), std::move(fn)});
  };
  add("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
      [](auto p) { return project(ops::matmul(p[0], p[1]), 1); });
  add("matmul_transposed", {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)},
      [](auto p) { return project(ops::matmul_transposed(p[0], p[1]), 2); });
  add("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](auto p) { return project(ops::add(p[0], p[1]), 3); });
  add("add_row", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
      [](auto p) { return project(ops::add_row(p[0], p[1]), 4); });
  add("mul_row", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
      [](auto p) { return project(ops::mul_row(p[0], p[1]), 5); });
  add("scale", {random_tensor({3, 4}, rng)}, [](auto p) { return project(ops::scale(p[0], 0.37), 6); });
  add("softmax", {random_tensor({3, 5}, rng)}, [](auto p) { return project(ops::softmax(p[0]), 7); });
  add("masked_softmax", {random_tensor({3, 5}, rng)},
      [&allowed](auto p) { return project(ops::masked_softmax(p[0], allowed), 8); });
  add("layernorm", {random_tensor({3, 6}, rng)}, [](auto p) { return project(ops::layernorm(p[0]), 9); });
  add("gelu", {random_tensor({3, 4}, rng)}, [](auto p) { return project(ops::gelu(p[0]), 10); });
  add("embed", {random_tensor({3, 4}, rng)}, [&idx](auto p) { return project(ops::embed(p[0], idx), 11); });
  add("concat_rows", {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
      [](auto p) { return project(ops::concat(std::span<const Tensor64>(p.data(), 2), 0), 12); });
  add("concat_cols", {random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)},
      [](auto p) { return project(ops::concat(std::span<const Tensor64>(p.data(), 2), 1), 13); });
  add("slice", {random_tensor({4, 5}, rng)},
      [](auto p) { return project(ops::slice(ops::slice(p[0], 1, 1, 4), 0, 1, 3), 14); });
  add("mean", {random_tensor({3, 4}, rng)}, [](auto p) { return ops::mean(p[0]); });
  add("sum", {random_tensor({3, 4}, rng)}, [](auto p) { return ops::sum(p[0]); });
  add("cross_entropy", {random_tensor({3, 4}, rng)},
      [&targets](auto p) { return ops::cross_entropy(p[0], targets, 3); });
  add("squared_error", {random_tensor({3, 2}, rng), random_tensor({3, 2}, rng)},
      [](auto p) { return ops::squared_error(p[0], p[1]); });

  const auto config = tiny_model(8, 1);
  const auto weights = lively_weights(config, 3);
  for (const auto head : {tasks::HeadKind::kClassification, tasks::HeadKind::kRegression}) {
    const auto ep = random_episode(config, 5, 3, head, 8);
    add(std::string("backbone-") + std::string(tasks::head_name(head)), weights.params,
        [config, ep](std::span<const Tensor64> p) { return model::loss(model::forward<double>(config, p, ep), ep); });
  }

  double worst = 0;
  std::string worst_name;
  std::size_t coordinates = 0;
  for (const auto& c : cases) {
    const auto r = core::grad_check(c.fn, c.params, 1e-4);
    coordinates += r.coordinates;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = c.name;
    }
    if (!(r.max_relative_error < 1e-4) || r.coordinates == 0) out.passed = false;
  }
  out.detail = std::to_string(cases.size()) + " graphs, " + std::to_string(coordinates) +
               " coordinates, max relative error " + sci(worst) + " (" + worst_name + ")";
  return out;
}

CheckResult check_mask_invariance(std::size_t episodes) {
  CheckResult out{"mask-invariance", true, ""};
  double worst_query = 0, worst_context = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    core::Rng rng = core::make_stream(e, 0x3a5c);
    const auto head = e % 2 == 0 ? tasks::HeadKind::kClassification : tasks::HeadKind::kRegression;
    const auto config = tiny_model(8, 1 + e % 2);
    const auto weights = lively_weights(config, 100 + e);
    const std::size_t nc = 4 + rng() % 9, nq = 3 + rng() % 5, f = config.max_features;
    const auto ep = random_episode(config, nc, nq, head, 1000 + e);
    const auto base = model::forward<double>(config, weights.params, ep);

    // Permute the query rows: each row's output follows it.
    std::vector<std::size_t> order(nq);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto permuted = ep;
    for (std::size_t i = 0; i < nq; ++i) {
      permuted.query_y[i] = ep.query_y[order[i]];
      for (std::size_t j = 0; j < f; ++j) permuted.query_x[i * f + j] = ep.query_x[order[i] * f + j];
    }
    const auto pq = model::forward<double>(config, weights.params, permuted);
    for (std::size_t i = 0; i < nq; ++i) {
      worst_query = std::max(worst_query, row_gap(query_row(pq, i), query_row(base, order[i])));
    }

    // Remove one query row: the others are unchanged.
    const std::size_t drop = rng() % nq;
    auto fewer = ep;
    fewer.query_y.erase(fewer.query_y.begin() + static_cast<std::ptrdiff_t>(drop));
    fewer.query_x.erase(fewer.query_x.begin() + static_cast<std::ptrdiff_t>(drop * f),
                        fewer.query_x.begin() + static_cast<std::ptrdiff_t>((drop + 1) * f));
    const auto pf = model::forward<double>(config, weights.params, fewer);
    for (std::size_t i = 0; i + 1 < nq; ++i) {
      worst_query = std::max(worst_query, row_gap(query_row(pf, i), query_row(base, i < drop ? i : i + 1)));
    }

    // Permute the context rows: no query output moves.
    std::vector<std::size_t> corder(nc);
    std::iota(corder.begin(), corder.end(), 0);
    std::shuffle(corder.begin(), corder.end(), rng);
    auto shuffled = ep;
    for (std::size_t i = 0; i < nc; ++i) {
      shuffled.context_y[i] = ep.context_y[corder[i]];
      for (std::size_t j = 0; j < f; ++j) shuffled.context_x[i * f + j] = ep.context_x[corder[i] * f + j];
    }
    const auto pc = model::forward<double>(config, weights.params, shuffled);
    for (std::size_t i = 0; i < nq; ++i) {
      worst_context = std::max(worst_context, row_gap(query_row(pc, i), query_row(base, i)));
    }
  }
  out.passed = worst_query <= 1e-10 && worst_context <= 1e-10;
  out.detail = std::to_string(episodes) + " episodes, max change: query edits " + sci(worst_query) +
               ", context permutation " + sci(worst_context);
  return out;
}

CheckResult check_task_space() {
  CheckResult out{"task-space", true, ""};
  using Key = std::tuple<std::size_t, std::string>;
  std::size_t enumerated = 0;
  for (std::size_t k = 1; k <= 12; ++k) {
    std::set<Key> oracle;
    for (std::size_t t = 0; t < k; ++t) {
      for (std::uint64_t m = 1; m < (std::uint64_t{1} << k); ++m) {
        if ((m >> t) & 1U) continue;
        std::string bits(k, '0');
        for (std::size_t c = 0; c < k; ++c) {
          if ((m >> c) & 1U) bits[c] = '1';
        }
        oracle.emplace(t, bits);
      }
    }
    const std::uint64_t closed = k * ((std::uint64_t{1} << (k - 1)) - 1);
    if (tasks::count_tasks(k, k) != oracle.size() || oracle.size() != closed) out.passed = false;
    if (k < 2) continue;
    std::set<Key> listed;
    const auto tasks_k = tasks::enumerate_tasks(synthetic_table(k, 40, 1));
    for (const auto& t : tasks_k) listed.emplace(t.target, t.features.to_string());
    if (listed != oracle || tasks_k.size() != oracle.size()) out.passed = false;
    enumerated += tasks_k.size();
  }
  std::size_t lists = 0;
  for (const std::size_t k : {6, 9, 12, 45}) {
    const auto table = synthetic_table(k, 30, k);
    std::vector<tasks::Task> previous;
    for (const auto budget : tasks::kBudgetGrid) {
      const auto a = tasks::build_task_space(table, budget, 11);
      const auto b = tasks::build_task_space(table, budget, 11);
      std::set<Key> distinct;
      for (const auto& t : a.tasks) distinct.emplace(t.target, t.features.to_string());
      const bool nested = previous.size() <= a.tasks.size() &&
                          std::equal(previous.begin(), previous.end(), a.tasks.begin());
      if (a.tasks != b.tasks || distinct.size() != a.tasks.size() || !nested ||
          a.tasks.size() != std::min<std::uint64_t>(budget, a.total)) {
        out.passed = false;
      }
      previous = a.tasks;
      ++lists;
    }
  }
  out.detail = "k = 1..12 match brute force (" + std::to_string(enumerated) + " tasks enumerated); " +
               std::to_string(lists) + " budgeted lists distinct, deterministic and nested";
  return out;
}

CheckResult check_metric_oracles(std::size_t instances) {
  CheckResult out{"metric-oracles", true, ""};
  core::Rng rng = core::make_stream(17, 17);
  double auc_gap = 0, rho_gap = 0;
  std::size_t defined = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> s(n);
    std::vector<std::uint8_t> pos(n);
    // Coarse scores so ties are common.
    for (auto& v : s) v = static_cast<double>(rng() % 7) / 7.0;
    for (auto& p : pos) p = static_cast<std::uint8_t>(rng() % 2);
    // Every instance has both classes; the single-class case is checked below.
    pos[0] = 1;
    pos[1] = 0;
    const bool both = std::count(pos.begin(), pos.end(), 1) > 0 && std::count(pos.begin(), pos.end(), 0) > 0;
    const auto got = eval::auc_binary(s, pos);
    if (got.has_value() != both) out.passed = false;
    if (both && got) {
      auc_gap = std::max(auc_gap, std::abs(*got - pairwise_auc(s, pos)));
      ++defined;
    }

    std::vector<double> a(n), b(n);
    for (auto& v : a) v = static_cast<double>(rng() % 5);
    for (auto& v : b) v = static_cast<double>(rng() % 9);
    const auto ra = counted_ranks(a), rb = counted_ranks(b);
    const bool constant = *std::min_element(a.begin(), a.end()) == *std::max_element(a.begin(), a.end()) ||
                          *std::min_element(b.begin(), b.end()) == *std::max_element(b.begin(), b.end());
    const auto rho = eval::spearman(a, b);
    if (rho.has_value() == constant) out.passed = false;
    if (rho && !constant) rho_gap = std::max(rho_gap, std::abs(*rho - plain_pearson(ra, rb)));
  }
  if (eval::auc_binary(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1})) out.passed = false;
  std::vector<double> truth(101);
  for (auto& v : truth) v = std::normal_distribution<double>(3.0, 2.0)(rng);
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  const auto r2 = eval::r2(std::vector<double>(truth.size(), mean), truth);
  const bool r2_ok = r2 && *r2 == 0.0;
  out.passed = out.passed && auc_gap <= 1e-12 && rho_gap <= 1e-12 && r2_ok;
  out.detail = "AUC vs pairwise over " + std::to_string(defined) + " instances: " + sci(auc_gap) +
               "; Spearman vs rank Pearson: " + sci(rho_gap) + "; R2(mean predictor) = " +
               (r2 ? num(*r2) : std::string("undefined"));
  return out;
}

CheckResult check_reference_meta(std::uint64_t seed) {
  CheckResult out{"reference-meta", true, ""};
  const auto records = data::reference_records(data::Benchmark::kCc18);
  std::vector<double> nf, s;
  for (const auto& r : records) {
    nf.push_back(static_cast<double>(r.features));
    s.push_back(r.score);
  }
  const auto rho = eval::spearman(nf, s);
  const auto fit = meta::fit_meta_regressor(meta::reference_dataset(records, true), seed);
  // Columns 0 and 1 are n-instances and n-features.
  const double imp_inst = fit.importances.at(0), imp_feat = fit.importances.at(1);
  out.passed = rho && *rho > 0 && imp_feat > imp_inst && fit.names.at(1) == "n_features";
  out.detail = "CC-18 table, " + std::to_string(records.size()) + " records, Spearman(n-features, score) = " + (rho ? num(*rho) : "NA") +
               "; importance n-features " + num(imp_feat) + " vs n-instances " + num(imp_inst);
  return out;
}

CheckResult check_planted_meta(std::uint64_t seed) {
  CheckResult out{"planted-meta", true, ""};
  core::Rng rng = core::make_stream(seed, 0x91a);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> width(2, 200);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<meta::MetaFeatures> feats;
  std::vector<double> scores;
  for (int i = 0; i < 100; ++i) {
    meta::MetaFeatures f;
    f.dataset = "planted" + std::to_string(i);
    f.n_features = width(rng);
    f.n_instances = std::floor(100 + 5000 * u(rng));
    f.n_categorical = std::floor(f.n_features * u(rng));
    f.n_numeric = f.n_features - f.n_categorical;
    f.missing_fraction = 0.2 * u(rng);
    f.final_cls_loss = 0.5 + u(rng);
    f.final_reg_loss = 0.5 + u(rng);
    feats.push_back(f);
    scores.push_back(0.5 + 0.08 * std::log(f.n_features) + noise(rng));
  }
  const auto fit = meta::fit_meta_regressor(meta::meta_dataset(feats, scores), seed);
  out.passed = fit.names.at(0) == "n_features" && fit.r2 > 0.9 && fit.importances.at(0) > 0.9;
  out.detail = "held-out R2 " + num(fit.r2) + " on " + std::to_string(fit.test_rows) +
               " rows; importance(n-features) " + num(fit.importances.at(0));
  return out;
}

CheckResult check_determinism(const std::filesystem::path& scratch, std::size_t steps) {
  CheckResult out{"determinism", true, ""};
  std::filesystem::create_directories(scratch);
  const auto manifest = data::Manifest::load(data::default_data_dir() / "manifest.json");
  const auto table = manifest.load_table("wine");
  const auto space = tasks::build_task_space(table, 200, 4);
  model::ModelConfig mc;
  mc.embed_dim = 16;
  mc.layers = 2;
  mc.heads = 2;
  mc.ff_dim = 32;
  mc.max_features = 8;
  mc.max_classes = 4;
  auto tc = train::TrainConfig::with_steps(steps);
  tc.batch = 4;
  tc.context = 48;
  tc.query = 16;
  tc.seed = 4;

  std::string traces[2];
  std::uint64_t sums[2];
  train::Checkpoint first;
  for (int i = 0; i < 2; ++i) {
    auto result = train::pretrain(table, space, mc, tc);
    const auto ck = scratch / ("determinism" + std::to_string(i) + ".ticl");
    const auto tr = scratch / ("determinism" + std::to_string(i) + ".csv");
    train::save_checkpoint(result.checkpoint, ck);
    train::write_trace(result.trace, tr);
    sums[i] = train::checkpoint_checksum(ck);
    traces[i] = slurp(tr);
    if (i == 0) first = std::move(result.checkpoint);
  }
  const bool same_run = sums[0] == sums[1] && traces[0] == traces[1] && !traces[0].empty();

  // Round trip: predictions from the loaded weights are bitwise those of the
  // in-memory weights.
  const auto loaded = train::load_checkpoint(scratch / "determinism0.ticl");
  const auto target = manifest.load_table("pima");
  const auto column = target.column_index(*manifest.at("pima").target);
  eval::EvalProtocol protocol;
  protocol.folds = 1;
  protocol.k = 32;
  const auto a = eval::run_model(first.weights, target, column, protocol);
  const auto b = eval::run_model(loaded.weights, target, column, protocol);
  bool same_predictions = a.folds.size() == b.folds.size();
  std::size_t values = 0;
  for (std::size_t f = 0; same_predictions && f < a.folds.size(); ++f) {
    const auto& x = a.folds[f].outputs;
    const auto& y = b.folds[f].outputs;
    same_predictions = x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
    values += x.size();
  }
  out.passed = same_run && same_predictions;
  std::ostringstream s;
  s << "two " << steps << "-step runs: checksum " << std::hex << sums[0] << (sums[0] == sums[1] ? " == " : " != ")
    << sums[1] << std::dec << ", traces " << (traces[0] == traces[1] ? "identical" : "differ") << "; round trip "
    << (same_predictions ? "bitwise equal" : "differs") << " over " << values << " outputs";
  out.detail = s.str();
  return out;
}

CheckResult check_baselines() {
  CheckResult out{"baselines", true, ""};
  auto accuracy = [](const std::vector<double>& probs, const std::vector<double>& y, std::size_t classes) {
    return *eval::accuracy(probs, y, classes);
  };
  const auto train = blobs(200, 1, 6.0), test = blobs(200, 2, 6.0);
  trees::ForestParams p;
  p.classes = 2;
  p.seed = 3;
  const double forest_acc = accuracy(trees::fit_forest(train.x, train.y, p).predict(test.x), test.y, 2);

  const auto toy = blobs(80, 5, 1.0);
  trees::ForestParams single;
  single.classes = 2;
  single.trees = 1;
  single.bootstrap = false;
  single.max_features = 2;
  const auto fp = trees::fit_forest(toy.x, toy.y, single).predict(toy.x);
  const auto tree = trees::fit_tree(toy.x, toy.y, {trees::TreeKind::kClassification, 2});
  bool identity = true;
  for (std::size_t r = 0; r < toy.x.rows; ++r) {
    const auto& tp = tree.predict_row(toy.x.row(r));
    identity = identity && fp[r * 2] == tp[0] && fp[r * 2 + 1] == tp[1];
  }

  // Separable data without a penalty never converges, so the cap binds.
  const auto sep = blobs(200, 11, 12.0);
  trees::LogisticParams free;
  free.c = INFINITY;
  const auto capped = trees::fit_logistic(sep.x, sep.y, 2, free);
  const auto regular = trees::fit_logistic(sep.x, sep.y, 2);
  out.passed = forest_acc > 0.95 && identity && capped.iterations == 1000 && !capped.converged &&
               regular.iterations <= 1000;
  out.detail = "forest accuracy " + num(forest_acc) + "; single tree " + (identity ? "identical" : "differs") +
               "; logistic iterations " + std::to_string(capped.iterations) + " (unpenalized), " +
               std::to_string(regular.iterations) + " (C = 1)";
  return out;
}

std::vector<CheckResult> run_selftest(const std::filesystem::path& scratch) {
  return {check_gradients(),          check_mask_invariance(),      check_task_space(),
          check_metric_oracles(),     check_reference_meta(),       check_planted_meta(),
          check_determinism(scratch), check_baselines()};
}

}  // namespace ticl::experiment
