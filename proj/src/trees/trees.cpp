#include "ticl/trees/trees.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "ticl/core/errors.hpp"
#include "ticl/core/rng.hpp"

namespace ticl::trees {
namespace {

constexpr double kMinGain = 1e-12;

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

void check_inputs(const Matrix& x, std::span<const double> y, TreeKind kind, std::size_t classes) {
  if (x.rows == 0 || x.cols == 0) throw DataError("tree fit needs at least one sample and feature");
  if (y.size() != x.rows) {
    throw DataError("tree fit: " + std::to_string(y.size()) + " labels for " + std::to_string(x.rows) +
                    " rows");
  }
  for (const double v : x.values) {
    if (std::isnan(v)) throw DataError("tree fit: NaN feature (impute upstream)");
  }
  if (kind == TreeKind::kClassification) {
    if (classes == 0) throw DataError("tree fit: classification needs a class count");
    for (const double v : y) {
      if (!(v >= 0 && v < static_cast<double>(classes)) || v != std::floor(v)) {
        throw DataError("tree fit: label " + std::to_string(v) + " outside [0, " +
                        std::to_string(classes) + ")");
      }
    }
  } else {
    for (const double v : y) {
      if (!std::isfinite(v)) throw DataError("tree fit: non-finite target");
    }
  }
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, const TreeParams& p)
      : x_(x), y_(y), p_(p), rng_(core::make_stream(p.seed, 0x7ee5)) {}

  std::vector<TreeNode> build(std::vector<std::size_t> samples) {
    samples_ = std::move(samples);
    struct Work {
      int node;
      std::size_t begin, end, depth;
    };
    std::vector<Work> stack{{0, 0, samples_.size(), 0}};
    nodes_.emplace_back();
    while (!stack.empty()) {
      const Work w = stack.back();
      stack.pop_back();
      TreeNode& node = nodes_[static_cast<std::size_t>(w.node)];
      node.samples = w.end - w.begin;
      node.value = leaf_value(w.begin, w.end);
      const auto split = best_split(w.begin, w.end, w.depth);
      if (split.feature < 0) continue;
      const auto mid = std::stable_partition(
          samples_.begin() + static_cast<std::ptrdiff_t>(w.begin),
          samples_.begin() + static_cast<std::ptrdiff_t>(w.end),
          [&](std::size_t r) { return x_.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold; });
      const auto cut = static_cast<std::size_t>(mid - samples_.begin());
      const int left = static_cast<int>(nodes_.size());
      nodes_.emplace_back();
      nodes_.emplace_back();
      TreeNode& parent = nodes_[static_cast<std::size_t>(w.node)];
      parent.feature = split.feature;
      parent.threshold = split.threshold;
      parent.gain = split.gain;
      parent.left = left;
      parent.right = left + 1;
      // Right first so the left subtree is numbered next (depth-first order).
      stack.push_back({left + 1, cut, w.end, w.depth + 1});
      stack.push_back({left, w.begin, cut, w.depth + 1});
    }
    return std::move(nodes_);
  }

 private:
  std::vector<double> leaf_value(std::size_t begin, std::size_t end) const {
    const double n = static_cast<double>(end - begin);
    if (p_.kind == TreeKind::kClassification) {
      std::vector<double> freq(p_.classes, 0.0);
      for (std::size_t i = begin; i < end; ++i) freq[static_cast<std::size_t>(y_[samples_[i]])] += 1.0;
      for (auto& f : freq) f /= n;
      return freq;
    }
    double s = 0;
    for (std::size_t i = begin; i < end; ++i) s += y_[samples_[i]];
    return {s / (n + p_.l2)};
  }

  std::vector<std::size_t> features_to_try() {
    std::vector<std::size_t> all(x_.cols);
    std::iota(all.begin(), all.end(), 0);
    const std::size_t m = p_.max_features == 0 ? x_.cols : std::min(p_.max_features, x_.cols);
    if (m == x_.cols) return all;
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng_)]);
    }
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
  }

  Candidate best_split(std::size_t begin, std::size_t end, std::size_t depth) {
    Candidate best;
    const std::size_t n = end - begin;
    if (n < 2 * p_.min_samples_leaf || n < 2) return best;
    if (p_.max_depth > 0 && depth >= p_.max_depth) return best;
    const bool cls = p_.kind == TreeKind::kClassification;

    std::vector<double> total_counts(cls ? p_.classes : 0, 0.0);
    double total_sum = 0, total_sq = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = y_[samples_[i]];
      if (cls) {
        total_counts[static_cast<std::size_t>(v)] += 1;
      } else {
        total_sum += v;
        total_sq += v * v;
      }
    }
    double parent_score = 0;
    if (cls) {
      std::size_t present = 0;
      for (const double c : total_counts) {
        parent_score += c * c;
        present += c > 0 ? 1 : 0;
      }
      if (present < 2) return best;
      parent_score /= static_cast<double>(n);
    } else {
      parent_score = total_sum * total_sum / (static_cast<double>(n) + p_.l2);
    }
    const double scale = cls ? static_cast<double>(n) : total_sq + 1.0;

    std::vector<std::pair<double, std::size_t>> order(n);
    std::vector<double> left_counts(total_counts.size());
    for (const std::size_t f : features_to_try()) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = samples_[begin + i];
        order[i] = {x_.at(r, f), r};
      }
      std::sort(order.begin(), order.end());
      if (order.front().first == order.back().first) continue;
      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      double left_sq = 0, right_sq = parent_score * static_cast<double>(n);
      double left_sum = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = y_[order[i].second];
        if (cls) {
          const auto k = static_cast<std::size_t>(v);
          const double lc = left_counts[k], rc = total_counts[k] - lc;
          left_sq += 2 * lc + 1;
          right_sq -= 2 * rc - 1;
          left_counts[k] = lc + 1;
        } else {
          left_sum += v;
        }
        if (order[i].first == order[i + 1].first) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < p_.min_samples_leaf || nr < p_.min_samples_leaf) continue;
        double gain;
        if (cls) {
          gain = left_sq / static_cast<double>(nl) + right_sq / static_cast<double>(nr) - parent_score;
        } else {
          const double right_sum = total_sum - left_sum;
          gain = left_sum * left_sum / (static_cast<double>(nl) + p_.l2) +
                 right_sum * right_sum / (static_cast<double>(nr) + p_.l2) - parent_score;
        }
        if (gain > best.gain && gain > kMinGain * scale) {
          double threshold = 0.5 * (order[i].first + order[i + 1].first);
          if (!(threshold < order[i + 1].first)) threshold = order[i].first;
          best = {gain, static_cast<int>(f), threshold};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> y_;
  TreeParams p_;
  core::Rng rng_;
  std::vector<std::size_t> samples_;
  std::vector<TreeNode> nodes_;
};

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != rows * cols) {
    throw DimensionError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                         std::to_string(values.size()) + " values");
  }
}

DecisionTree::DecisionTree(TreeKind kind, std::size_t classes, std::size_t features,
                           std::vector<TreeNode> nodes)
    : kind_(kind), classes_(classes), features_(features), nodes_(std::move(nodes)) {}

std::size_t DecisionTree::leaf_index(const double* x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

DecisionTree fit_tree(const Matrix& x, std::span<const double> y, const TreeParams& params,
                      std::span<const std::size_t> samples) {
  check_inputs(x, y, params.kind, params.classes);
  if (params.min_samples_leaf == 0) throw ConfigError("min_samples_leaf must be at least 1");
  std::vector<std::size_t> rows;
  if (samples.empty()) {
    rows.resize(x.rows);
    std::iota(rows.begin(), rows.end(), 0);
  } else {
    for (const auto r : samples) {
      if (r >= x.rows) throw DataError("tree fit: sample index out of range");
    }
    rows.assign(samples.begin(), samples.end());
  }
  TreeBuilder builder(x, y, params);
  return DecisionTree(params.kind, params.classes, x.cols, builder.build(std::move(rows)));
}

Forest::Forest(TreeKind kind, std::size_t classes, std::vector<DecisionTree> trees)
    : kind_(kind), classes_(classes), trees_(std::move(trees)) {}

std::vector<double> Forest::predict(const Matrix& x) const {
  const std::size_t width = kind_ == TreeKind::kClassification ? classes_ : 1;
  std::vector<double> out(x.rows * width, 0.0);
  if (trees_.empty()) return out;
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (const auto& t : trees_) {
      const auto& v = t.predict_row(x.row(r));
      for (std::size_t k = 0; k < width; ++k) out[r * width + k] += v[k];
    }
    for (std::size_t k = 0; k < width; ++k) out[r * width + k] /= static_cast<double>(trees_.size());
  }
  return out;
}

Forest fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& params) {
  check_inputs(x, y, params.kind, params.classes);
  if (params.trees == 0) throw ConfigError("forest needs at least one tree");
  TreeParams tp;
  tp.kind = params.kind;
  tp.classes = params.classes;
  tp.max_depth = params.max_depth;
  tp.min_samples_leaf = params.min_samples_leaf;
  tp.max_features = params.max_features;
  if (tp.max_features == 0 && params.kind == TreeKind::kClassification) {
    tp.max_features = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.cols)))));
  }
  std::vector<DecisionTree> trees;
  trees.reserve(params.trees);
  std::vector<std::size_t> rows(x.rows);
  for (std::size_t t = 0; t < params.trees; ++t) {
    tp.seed = core::stream_seed(params.seed, 0xf0e5, t);
    if (params.bootstrap) {
      core::Rng rng = core::make_stream(params.seed, 0xb005, t);
      std::uniform_int_distribution<std::size_t> pick(0, x.rows - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    trees.push_back(fit_tree(x, y, tp, rows));
  }
  return Forest(params.kind, params.classes, std::move(trees));
}

BoostedModel::BoostedModel(double base, double shrinkage, std::size_t features,
                           std::vector<DecisionTree> trees, std::vector<double> train_loss)
    : base_(base),
      shrinkage_(shrinkage),
      features_(features),
      trees_(std::move(trees)),
      train_loss_(std::move(train_loss)) {}

std::vector<double> BoostedModel::predict(const Matrix& x) const {
  std::vector<double> out(x.rows, base_);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (const auto& t : trees_) out[r] += shrinkage_ * t.predict_row(x.row(r))[0];
  }
  return out;
}

std::vector<double> BoostedModel::importances() const {
  std::vector<double> imp(features_, 0.0);
  for (const auto& t : trees_) {
    for (const auto& n : t.nodes()) {
      if (n.feature >= 0) imp[static_cast<std::size_t>(n.feature)] += n.gain;
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0) {
    for (auto& v : imp) v /= total;
  }
  return imp;
}

BoostedModel fit_boosted(const Matrix& x, std::span<const double> y, const BoostParams& params) {
  check_inputs(x, y, TreeKind::kRegression, 0);
  if (!(params.shrinkage > 0 && params.shrinkage <= 1)) throw ConfigError("shrinkage must lie in (0, 1]");
  if (params.l2 < 0) throw ConfigError("l2 must be non-negative");
  const double n = static_cast<double>(x.rows);
  const bool flat = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  const double base = flat ? y[0] : std::accumulate(y.begin(), y.end(), 0.0) / n;
  std::vector<double> pred(x.rows, base), residual(x.rows);
  auto mse = [&] {
    double s = 0;
    for (std::size_t r = 0; r < x.rows; ++r) {
      residual[r] = y[r] - pred[r];
      s += residual[r] * residual[r];
    }
    return s / n;
  };
  std::vector<double> loss{mse()};
  TreeParams tp;
  tp.kind = TreeKind::kRegression;
  tp.max_depth = params.max_depth;
  tp.min_samples_leaf = params.min_samples_leaf;
  tp.l2 = params.l2;
  std::vector<DecisionTree> trees;
  for (std::size_t round = 0; round < params.rounds; ++round) {
    if (std::all_of(residual.begin(), residual.end(), [](double v) { return v == 0.0; })) break;
    auto tree = fit_tree(x, residual, tp);
    if (tree.nodes().size() == 1 && tree.nodes()[0].value[0] == 0.0) break;
    for (std::size_t r = 0; r < x.rows; ++r) pred[r] += params.shrinkage * tree.predict_row(x.row(r))[0];
    trees.push_back(std::move(tree));
    loss.push_back(mse());
  }
  return BoostedModel(base, params.shrinkage, x.cols, std::move(trees), std::move(loss));
}

std::vector<double> LinearModel::predict(const Matrix& x) const {
  const std::size_t p = x.cols;
  if (weights.size() != classes * p) {
    throw DimensionError("linear model expects " + std::to_string(weights.size() / std::max<std::size_t>(1, classes)) +
                         " features, got " + std::to_string(p));
  }
  if (kind == Kind::kRidge) {
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = intercepts[0] + dot(weights.data(), x.row(r), p);
    return out;
  }
  std::vector<double> out(x.rows * classes);
  std::vector<double> z(classes);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t k = 0; k < classes; ++k) z[k] = intercepts[k] + dot(weights.data() + k * p, x.row(r), p);
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0;
    for (auto& v : z) total += (v = std::exp(v - peak));
    for (std::size_t k = 0; k < classes; ++k) out[r * classes + k] = z[k] / total;
  }
  return out;
}

LinearModel fit_ridge(const Matrix& x, std::span<const double> y, double lambda) {
  check_inputs(x, y, TreeKind::kRegression, 0);
  if (!(lambda > 0)) throw ConfigError("ridge needs a positive penalty");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> X(x.values.data(), static_cast<Eigen::Index>(x.rows),
                                static_cast<Eigen::Index>(x.cols));
  const Eigen::Map<const Eigen::VectorXd> Y(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const double y_mean = Y.mean();
  const Mat centered = X.rowwise() - mean;
  Eigen::MatrixXd gram = centered.transpose() * centered;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd w = gram.ldlt().solve(centered.transpose() * (Y.array() - y_mean).matrix());
  LinearModel m;
  m.kind = LinearModel::Kind::kRidge;
  m.classes = 1;
  m.weights.assign(w.data(), w.data() + w.size());
  m.intercepts = {y_mean - mean.dot(w)};
  return m;
}

LinearModel fit_logistic(const Matrix& x, std::span<const double> y, std::size_t classes,
                         const LogisticParams& params) {
  check_inputs(x, y, TreeKind::kClassification, classes);
  if (classes < 2) throw ConfigError("logistic regression needs at least two classes");
  if (!(params.c > 0)) throw ConfigError("logistic C must be positive");
  const std::size_t n = x.rows, p = x.cols, k = classes;
  const double nn = static_cast<double>(n);
  const double penalty = std::isinf(params.c) ? 0.0 : 1.0 / (params.c * nn);

  // Lipschitz bound of the mean loss: the softmax curvature is at most 1/2.
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat aug(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < p; ++c) aug(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x.at(r, c);
    aug(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p)) = 1.0;
  }
  const Eigen::MatrixXd gram = aug.transpose() * aug / nn;
  const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                         .eigenvalues()
                         .maxCoeff();
  const double step = 1.0 / (0.5 * top + penalty);

  // Parameters as k x (p + 1), the last column holding the intercepts.
  const std::size_t width = p + 1;
  std::vector<double> w(k * width, 0.0), prev = w, look(w.size()), grad(w.size()), z(k);
  LinearModel m;
  m.kind = LinearModel::Kind::kLogistic;
  m.classes = k;
  m.converged = false;
  std::size_t it = 0, since_restart = 0;
  for (; it < params.max_iterations; ++it) {
    const double momentum = static_cast<double>(since_restart) / static_cast<double>(since_restart + 3);
    ++since_restart;
    for (std::size_t i = 0; i < w.size(); ++i) look[i] = w[i] + momentum * (w[i] - prev[i]);
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double* row = x.row(r);
      for (std::size_t c = 0; c < k; ++c) z[c] = look[c * width + p] + dot(look.data() + c * width, row, p);
      const double peak = *std::max_element(z.begin(), z.end());
      double total = 0;
      for (auto& v : z) total += (v = std::exp(v - peak));
      for (std::size_t c = 0; c < k; ++c) {
        const double err = (z[c] / total - (static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0)) / nn;
        double* g = grad.data() + c * width;
        for (std::size_t j = 0; j < p; ++j) g[j] += err * row[j];
        g[p] += err;
      }
    }
    double worst = 0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < p; ++j) grad[c * width + j] += penalty * look[c * width + j];
    }
    for (const double g : grad) worst = std::max(worst, std::abs(g));
    if (worst < params.tolerance) {
      w = look;
      m.converged = true;
      break;
    }
    prev = w;
    double progress = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = look[i] - step * grad[i];
      progress += grad[i] * (w[i] - prev[i]);
    }
    // Gradient restart: drop the momentum once it points uphill.
    if (progress > 0) since_restart = 0;
  }
  m.iterations = it;
  m.weights.resize(k * p);
  m.intercepts.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(w.begin() + static_cast<std::ptrdiff_t>(c * width), p,
                m.weights.begin() + static_cast<std::ptrdiff_t>(c * p));
    m.intercepts[c] = w[c * width + p];
  }
  return m;
}

}  // namespace ticl::trees
