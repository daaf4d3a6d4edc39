#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "leakedweb/learners/tree.hpp"

namespace leakedweb {

struct LogitBoostParams {
  std::size_t n_stages = 100;
  double shrinkage = 1.0;
  std::size_t base_max_depth = 3;
  std::size_t features_per_split = 0;  // 0 = sqrt (the randomized-tree base)
  std::uint64_t seed = 0;
  double weight_floor = 1e-6;  // working-weight clip
  double response_cap = 4.0;   // working-response clip, +-4

  /// Test hook: called after every stage with the n x J class-probability
  /// matrix. Not serialized.
  std::function<void(std::size_t stage, const Matrix<double>& probs)> stage_observer;
};

/// Stagewise additive logistic regression for J classes: per stage one
/// weighted regression tree per class is fitted to the working responses,
/// the J-class correction recenters the stage, and class probabilities come
/// from the softmax of accumulated scores.
struct LogitBoostModel {
  std::size_t n_classes = 0;
  double shrinkage = 1.0;
  std::vector<std::vector<RegressionTree>> stages;  // stages x classes

  /// Per-class probabilities (softmax of accumulated scores), summing to 1.
  std::vector<double> probabilities(std::span<const double> x) const;
};

LogitBoostModel fit_logit_boost(const Matrix<double>& X, const std::vector<std::size_t>& y,
                                std::size_t n_classes, const LogitBoostParams& params);

/// Stable softmax used by both training and inference; clamps instead of
/// overflowing.
std::vector<double> softmax(std::span<const double> scores);

}  // namespace leakedweb
