#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

/// Dynamic time warping with |a-b| local cost. Unconstrained when window is
/// unset (then it equals the brute-force oracle); Sakoe-Chiba banded
/// otherwise. The window must admit the corner cells: window >= |n - m|.
double dtw_distance(std::span<const double> a, std::span<const double> b,
                    std::optional<std::size_t> window = std::nullopt);

/// Early-abandoning variant for nearest-neighbour search: returns infinity
/// as soon as every cell of a row exceeds cutoff.
double dtw_distance_bounded(std::span<const double> a, std::span<const double> b,
                            std::optional<std::size_t> window, double cutoff);

struct DtwKnnParams {
  std::size_t k = 1;
  std::optional<std::size_t> window;  // unconstrained by default
};

/// Nearest-neighbour classifier over z-normalized per-event channels.
/// Multivariate distance is the sum of per-event independently-warped
/// distances.
struct DtwKnnModel {
  std::size_t k = 1;
  std::optional<std::size_t> window;
  std::size_t n_classes = 0;
  std::size_t n_events = 0;
  std::size_t samples_per_trace = 0;
  std::vector<std::size_t> labels;                         // per prototype
  std::vector<std::vector<std::vector<double>>> prototypes;  // [proto][event][t]

  /// Vote-derived pseudo-probabilities; majority wins, vote ties resolve by
  /// smaller mean distance, then class order.
  std::vector<double> scores(const std::vector<std::vector<double>>& channels) const;
};

DtwKnnModel fit_dtw_knn(const std::vector<std::vector<std::vector<double>>>& channels,
                        const std::vector<std::size_t>& labels, std::size_t n_classes,
                        const DtwKnnParams& params);

}  // namespace leakedweb
