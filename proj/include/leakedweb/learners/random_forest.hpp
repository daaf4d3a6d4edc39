#pragma once

#include <cstdint>
#include <vector>

#include "leakedweb/learners/tree.hpp"

namespace leakedweb {

struct RandomForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;  // unbounded
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = sqrt
  std::uint64_t seed = 0;
};

/// Bagged CART ensemble; every tree grows on a bootstrap resample with
/// Gini splits over a fresh random feature subset per node.
struct RandomForestModel {
  std::vector<ClassificationTree> trees;
  std::size_t n_classes = 0;

  /// Per-class vote counts; they always sum to the number of trees.
  std::vector<std::size_t> vote(std::span<const double> x) const;
};

RandomForestModel fit_random_forest(const Matrix<double>& X, const std::vector<std::size_t>& y,
                                    std::size_t n_classes, const RandomForestParams& params);

}  // namespace leakedweb
