#include "leakedweb/learners/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace leakedweb {

double gini_impurity(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  if (total == 0) return 0.0;
  double sum_sq = 0.0;
  for (std::size_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

std::vector<std::size_t> sample_features(std::size_t n_features, std::size_t count, Rng& rng) {
  count = std::min(count, n_features);
  std::vector<std::size_t> pool(n_features);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n_features - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

namespace {

std::size_t resolve_mtry(std::size_t configured, std::size_t n_features) {
  if (configured > 0) return std::min(configured, n_features);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(
                                      static_cast<double>(n_features)))));
}

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double quality = -1.0;  // larger is better within one node
};

void consider(SplitChoice& best, double quality, std::size_t feature, double threshold) {
  constexpr double kEps = 1e-12;
  if (!best.found || quality > best.quality + kEps ||
      (std::abs(quality - best.quality) <= kEps &&
       (feature < best.feature || (feature == best.feature && threshold < best.threshold)))) {
    best = {true, feature, threshold, quality};
  }
}

// Midpoint that is guaranteed to separate lo from hi under `x <= thr`.
double split_threshold(double lo, double hi) {
  double thr = lo + (hi - lo) / 2.0;
  if (thr >= hi) thr = lo;
  return thr;
}

}  // namespace

// ---- ClassificationTree ----

void ClassificationTree::fit(const Matrix<double>& X, const std::vector<std::size_t>& y,
                             const std::vector<std::size_t>& instance_indices,
                             std::size_t n_classes, const ClassificationTreeParams& params,
                             Rng& rng) {
  nodes_.clear();
  if (instance_indices.empty()) throw InvariantError("cannot fit a tree on zero instances");
  std::vector<std::size_t> indices = instance_indices;
  grow(X, y, indices, n_classes, params, 0, rng);
}

int ClassificationTree::grow(const Matrix<double>& X, const std::vector<std::size_t>& y,
                             std::vector<std::size_t>& indices, std::size_t n_classes,
                             const ClassificationTreeParams& params, std::size_t depth, Rng& rng) {
  const std::size_t n = indices.size();
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::size_t idx : indices) counts[y[idx]]++;

  const auto majority = static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  const bool pure = static_cast<std::size_t>(counts[static_cast<std::size_t>(majority)]) == n;

  auto make_leaf = [&]() {
    TreeNode leaf;
    leaf.label = majority;
    nodes_.push_back(leaf);
    return static_cast<int>(nodes_.size() - 1);
  };

  if (pure || n < 2 * params.min_leaf || (params.max_depth > 0 && depth >= params.max_depth)) {
    return make_leaf();
  }

  const std::size_t mtry = resolve_mtry(params.features_per_split, X.cols());
  const auto features = sample_features(X.cols(), mtry, rng);

  // Maximizing sum(c_L^2)/n_L + sum(c_R^2)/n_R is equivalent to maximizing
  // Gini gain; counts update in O(1) per scan step.
  SplitChoice best;
  std::vector<std::pair<double, std::size_t>> order(n);
  std::vector<double> left_counts(n_classes), right_counts(n_classes);
  for (std::size_t f : features) {
    for (std::size_t i = 0; i < n; ++i) order[i] = {X(indices[i], f), indices[i]};
    std::sort(order.begin(), order.end());
    if (order.front().first == order.back().first) continue;  // constant feature

    std::fill(left_counts.begin(), left_counts.end(), 0.0);
    for (std::size_t c = 0; c < n_classes; ++c) right_counts[c] = static_cast<double>(counts[c]);
    double left_sq = 0.0;
    double right_sq = 0.0;
    for (double c : right_counts) right_sq += c * c;

    for (std::size_t pos = 0; pos + 1 < n; ++pos) {
      const std::size_t cls = y[order[pos].second];
      left_sq += 2.0 * left_counts[cls] + 1.0;
      right_sq -= 2.0 * right_counts[cls] - 1.0;
      left_counts[cls] += 1.0;
      right_counts[cls] -= 1.0;
      if (order[pos].first == order[pos + 1].first) continue;
      const std::size_t n_left = pos + 1;
      const std::size_t n_right = n - n_left;
      if (n_left < params.min_leaf || n_right < params.min_leaf) continue;
      const double quality = left_sq / static_cast<double>(n_left) +
                             right_sq / static_cast<double>(n_right);
      consider(best, quality, f, split_threshold(order[pos].first, order[pos + 1].first));
    }
  }

  if (!best.found) return make_leaf();
  // Reject zero-gain splits: quality at the parent is sum(c^2)/n.
  double parent_sq = 0.0;
  for (std::size_t c : counts) parent_sq += static_cast<double>(c) * static_cast<double>(c);
  if (best.quality <= parent_sq / static_cast<double>(n) + 1e-9) return make_leaf();

  std::vector<std::size_t> left_idx, right_idx;
  for (std::size_t idx : indices) {
    (X(idx, best.feature) <= best.threshold ? left_idx : right_idx).push_back(idx);
  }

  TreeNode node;
  node.feature = static_cast<int>(best.feature);
  node.threshold = best.threshold;
  nodes_.push_back(node);
  const auto me = static_cast<int>(nodes_.size() - 1);
  indices.clear();
  indices.shrink_to_fit();
  const int left = grow(X, y, left_idx, n_classes, params, depth + 1, rng);
  const int right = grow(X, y, right_idx, n_classes, params, depth + 1, rng);
  nodes_[static_cast<std::size_t>(me)].left = left;
  nodes_[static_cast<std::size_t>(me)].right = right;
  return me;
}

std::size_t ClassificationTree::predict(std::span<const double> x) const {
  std::size_t node = 0;
  while (nodes_[node].feature >= 0) {
    const auto f = static_cast<std::size_t>(nodes_[node].feature);
    node = static_cast<std::size_t>(x[f] <= nodes_[node].threshold ? nodes_[node].left
                                                                   : nodes_[node].right);
  }
  return static_cast<std::size_t>(nodes_[node].label);
}

// ---- RegressionTree ----

void RegressionTree::fit(const Matrix<double>& X, std::span<const double> targets,
                         std::span<const double> weights, const RegressionTreeParams& params,
                         Rng& rng) {
  nodes_.clear();
  if (X.rows() == 0) throw InvariantError("cannot fit a tree on zero instances");
  std::vector<std::size_t> indices(X.rows());
  std::iota(indices.begin(), indices.end(), 0);
  grow(X, targets, weights, indices, params, 0, rng);
}

int RegressionTree::grow(const Matrix<double>& X, std::span<const double> targets,
                         std::span<const double> weights, std::vector<std::size_t>& indices,
                         const RegressionTreeParams& params, std::size_t depth, Rng& rng) {
  const std::size_t n = indices.size();
  double sum_w = 0.0;
  double sum_wz = 0.0;
  for (std::size_t idx : indices) {
    sum_w += weights[idx];
    sum_wz += weights[idx] * targets[idx];
  }

  auto make_leaf = [&]() {
    TreeNode leaf;
    leaf.value = sum_w > 0.0 ? sum_wz / sum_w : 0.0;
    nodes_.push_back(leaf);
    return static_cast<int>(nodes_.size() - 1);
  };

  if (n < 2 * params.min_leaf || (params.max_depth > 0 && depth >= params.max_depth)) {
    return make_leaf();
  }

  const std::size_t mtry = resolve_mtry(params.features_per_split, X.cols());
  const auto features = sample_features(X.cols(), mtry, rng);

  // Weighted SSE reduction: maximize (sum wz)_L^2/(sum w)_L + (same)_R.
  SplitChoice best;
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t f : features) {
    for (std::size_t i = 0; i < n; ++i) order[i] = {X(indices[i], f), indices[i]};
    std::sort(order.begin(), order.end());
    if (order.front().first == order.back().first) continue;

    double w_left = 0.0, wz_left = 0.0;
    double w_right = sum_w, wz_right = sum_wz;
    for (std::size_t pos = 0; pos + 1 < n; ++pos) {
      const std::size_t idx = order[pos].second;
      w_left += weights[idx];
      wz_left += weights[idx] * targets[idx];
      w_right -= weights[idx];
      wz_right -= weights[idx] * targets[idx];
      if (order[pos].first == order[pos + 1].first) continue;
      const std::size_t n_left = pos + 1;
      const std::size_t n_right = n - n_left;
      if (n_left < params.min_leaf || n_right < params.min_leaf) continue;
      if (w_left <= 0.0 || w_right <= 0.0) continue;
      const double quality = wz_left * wz_left / w_left + wz_right * wz_right / w_right;
      consider(best, quality, f, split_threshold(order[pos].first, order[pos + 1].first));
    }
  }

  if (!best.found) return make_leaf();
  const double parent_quality = sum_w > 0.0 ? sum_wz * sum_wz / sum_w : 0.0;
  if (best.quality <= parent_quality + 1e-12) return make_leaf();

  std::vector<std::size_t> left_idx, right_idx;
  for (std::size_t idx : indices) {
    (X(idx, best.feature) <= best.threshold ? left_idx : right_idx).push_back(idx);
  }

  TreeNode node;
  node.feature = static_cast<int>(best.feature);
  node.threshold = best.threshold;
  nodes_.push_back(node);
  const auto me = static_cast<int>(nodes_.size() - 1);
  indices.clear();
  indices.shrink_to_fit();
  const int left = grow(X, targets, weights, left_idx, params, depth + 1, rng);
  const int right = grow(X, targets, weights, right_idx, params, depth + 1, rng);
  nodes_[static_cast<std::size_t>(me)].left = left;
  nodes_[static_cast<std::size_t>(me)].right = right;
  return me;
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t node = 0;
  while (nodes_[node].feature >= 0) {
    const auto f = static_cast<std::size_t>(nodes_[node].feature);
    node = static_cast<std::size_t>(x[f] <= nodes_[node].threshold ? nodes_[node].left
                                                                   : nodes_[node].right);
  }
  return nodes_[node].value;
}

}  // namespace leakedweb
