#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ticl::trees {

/// Dense row-major design matrix without missing values.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  const double* row(std::size_t r) const { return values.data() + r * cols; }
};

enum class TreeKind { kClassification, kRegression };

struct TreeParams {
  TreeKind kind = TreeKind::kRegression;
  /// Classification: labels are codes in [0, classes).
  std::size_t classes = 0;
  /// 0 = unlimited.
  std::size_t max_depth = 0;
  std::size_t min_samples_leaf = 1;
  /// Features tried per split; 0 = all.
  std::size_t max_features = 0;
  /// Regression leaf shrinkage: leaf = sum / (count + l2). 0 gives the mean.
  double l2 = 0.0;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Leaf: class frequencies (classification) or one value (regression).
  std::vector<double> value;
  /// Impurity decrease of this split (count-weighted).
  double gain = 0.0;
  std::size_t samples = 0;
};

/// Binary tree; rows with x[feature] <= threshold go left.
class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(TreeKind kind, std::size_t classes, std::size_t features, std::vector<TreeNode> nodes);

  TreeKind kind() const { return kind_; }
  std::size_t classes() const { return classes_; }
  std::size_t features() const { return features_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t leaf_index(const double* x) const;
  const std::vector<double>& predict_row(const double* x) const { return nodes_[leaf_index(x)].value; }
  std::size_t depth() const;

 private:
  TreeKind kind_ = TreeKind::kRegression;
  std::size_t classes_ = 0;
  std::size_t features_ = 0;
  std::vector<TreeNode> nodes_;
};

/// Exact greedy CART. `samples` lists the training rows (repeats allowed, as
/// in a bootstrap); empty means every row once. Throws DataError on empty
/// input, NaN features or labels outside [0, classes).
DecisionTree fit_tree(const Matrix& x, std::span<const double> y, const TreeParams& params,
                      std::span<const std::size_t> samples = {});

struct ForestParams {
  TreeKind kind = TreeKind::kClassification;
  std::size_t classes = 0;
  std::size_t trees = 100;
  bool bootstrap = true;
  /// 0 = floor(sqrt(p)) for classification, p for regression.
  std::size_t max_features = 0;
  std::size_t max_depth = 0;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;
};

class Forest {
 public:
  Forest() = default;
  Forest(TreeKind kind, std::size_t classes, std::vector<DecisionTree> trees);

  const std::vector<DecisionTree>& trees() const { return trees_; }
  /// Mean class probabilities (classification) or mean value per row:
  /// rows x classes or rows x 1.
  std::vector<double> predict(const Matrix& x) const;

 private:
  TreeKind kind_ = TreeKind::kClassification;
  std::size_t classes_ = 0;
  std::vector<DecisionTree> trees_;
};

Forest fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& params);

struct BoostParams {
  std::size_t rounds = 200;
  std::size_t max_depth = 3;
  double shrinkage = 0.1;
  double l2 = 1.0;
  std::size_t min_samples_leaf = 1;
};

class BoostedModel {
 public:
  BoostedModel() = default;
  BoostedModel(double base, double shrinkage, std::size_t features, std::vector<DecisionTree> trees,
               std::vector<double> train_loss);

  double base_score() const { return base_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }
  /// Mean squared training error before any tree and after each round.
  const std::vector<double>& train_loss() const { return train_loss_; }
  std::vector<double> predict(const Matrix& x) const;
  /// Cumulative split gain per feature normalized to sum 1 (all zeros when
  /// no split was made).
  std::vector<double> importances() const;

 private:
  double base_ = 0.0;
  double shrinkage_ = 0.1;
  std::size_t features_ = 0;
  std::vector<DecisionTree> trees_;
  std::vector<double> train_loss_;
};

/// Squared-error gradient boosting on residuals. Stops early once the
/// residuals are all zero.
BoostedModel fit_boosted(const Matrix& x, std::span<const double> y, const BoostParams& params = {});

struct LinearModel {
  enum class Kind { kRidge, kLogistic };
  Kind kind = Kind::kRidge;
  std::size_t classes = 1;
  /// classes x cols weights and per-class intercepts (ridge: one row).
  std::vector<double> weights;
  std::vector<double> intercepts;
  std::size_t iterations = 0;
  bool converged = true;

  /// Ridge: one value per row. Logistic: rows x classes probabilities.
  std::vector<double> predict(const Matrix& x) const;
};

/// Ridge regression via the normal equations with an unpenalized intercept.
LinearModel fit_ridge(const Matrix& x, std::span<const double> y, double lambda = 1.0);

struct LogisticParams {
  /// Inverse penalty strength: loss = sum of log-losses + ||W||^2 / (2C).
  /// Infinity disables the penalty.
  double c = 1.0;
  std::size_t max_iterations = 1000;
  double tolerance = 1e-6;
};

/// Multinomial logistic regression by accelerated gradient descent with
/// gradient-based momentum restarts. Stops
/// when the largest gradient entry of the mean loss falls below the
/// tolerance or the iteration cap is reached.
LinearModel fit_logistic(const Matrix& x, std::span<const double> y, std::size_t classes,
                         const LogisticParams& params = {});

}  // namespace ticl::trees
