#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

struct ShapeletParams {
  std::size_t min_len = 3;
  std::size_t max_len = 0;  // 0 = samples_per_trace / 2
  std::size_t max_candidates = 10000;
  std::size_t max_depth = 10;
  std::uint64_t seed = 0;
};

/// Shannon entropy in bits of a class-count histogram.
double entropy_bits(const std::vector<std::size_t>& counts);

/// Minimal z-normalized sliding distance between a (z-normalized) shapelet
/// and all equal-length windows of the series: sqrt of the mean pointwise
/// squared difference at the best alignment.
double min_shapelet_distance(std::span<const double> series, std::span<const double> shapelet);

/// Decision tree over shapelet distances: each internal node holds one
/// z-normalized subsequence of one event channel and a distance threshold;
/// leaves hold the training class distribution.
struct ShapeletModel {
  struct Node {
    int event = -1;            // -1 marks a leaf
    std::vector<double> values;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<std::size_t> class_counts;  // leaves only
  };

  std::vector<Node> nodes;
  std::size_t n_classes = 0;
  std::size_t n_events = 0;
  std::size_t samples_per_trace = 0;

  /// Leaf class distribution normalized to probabilities.
  std::vector<double> scores(const std::vector<std::vector<double>>& channels) const;
};

ShapeletModel fit_shapelet(const std::vector<std::vector<std::vector<double>>>& channels,
                           const std::vector<std::size_t>& labels, std::size_t n_classes,
                           const ShapeletParams& params);

}  // namespace leakedweb
