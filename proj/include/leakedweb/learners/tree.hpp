#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "leakedweb/core.hpp"
#include "leakedweb/rng.hpp"

namespace leakedweb {

/// Flat-array decision tree node shared by the classification and regression
/// trees. Internal nodes route on feature/threshold; leaves carry either a
/// class label (classification) or a response value (regression).
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = -1;      // classification leaf
  double value = 0.0;  // regression leaf
};

/// Gini impurity of a class-count histogram: 1 - sum p_c^2.
double gini_impurity(const std::vector<std::size_t>& counts);

struct ClassificationTreeParams {
  std::size_t max_depth = 0;  // 0 = unbounded
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = floor(sqrt(d)), at least 1
};

/// CART with Gini-impurity splits and per-split random feature subsampling.
/// Tie-breaks (equal gain) prefer the lowest feature index, then the lowest
/// threshold, so growth is reproducible.
class ClassificationTree {
 public:
  void fit(const Matrix<double>& X, const std::vector<std::size_t>& y,
           const std::vector<std::size_t>& instance_indices, std::size_t n_classes,
           const ClassificationTreeParams& params, Rng& rng);

  std::size_t predict(std::span<const double> x) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& nodes() { return nodes_; }

 private:
  int grow(const Matrix<double>& X, const std::vector<std::size_t>& y,
           std::vector<std::size_t>& indices, std::size_t n_classes,
           const ClassificationTreeParams& params, std::size_t depth, Rng& rng);

  std::vector<TreeNode> nodes_;
};

struct RegressionTreeParams {
  std::size_t max_depth = 3;
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = floor(sqrt(d)), at least 1
};

/// Weighted least-squares regression tree (LogitBoost base learner). Splits
/// maximize weighted SSE reduction; leaves predict the weighted mean target.
class RegressionTree {
 public:
  void fit(const Matrix<double>& X, std::span<const double> targets,
           std::span<const double> weights, const RegressionTreeParams& params, Rng& rng);

  double predict(std::span<const double> x) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& nodes() { return nodes_; }

 private:
  int grow(const Matrix<double>& X, std::span<const double> targets,
           std::span<const double> weights, std::vector<std::size_t>& indices,
           const RegressionTreeParams& params, std::size_t depth, Rng& rng);

  std::vector<TreeNode> nodes_;
};

/// Distinct feature indices drawn without replacement; the RF/boosting
/// subsampling primitive.
std::vector<std::size_t> sample_features(std::size_t n_features, std::size_t count, Rng& rng);

}  // namespace leakedweb
