#include "leakedweb/learners/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace leakedweb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dtw_impl(std::span<const double> a, std::span<const double> b,
                std::optional<std::size_t> window, double cutoff) {
  if (a.empty() || b.empty()) throw InvariantError("DTW inputs must be non-empty");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (window) {
    const std::size_t diff = n > m ? n - m : m - n;
    if (*window < diff) {
      throw InvariantError("DTW window " + std::to_string(*window) +
                           " cannot align lengths " + std::to_string(n) + " and " +
                           std::to_string(m));
    }
  }

  // Two-row DP over the (n+1) x (m+1) grid; identical cell arithmetic to the
  // full-table oracle, so unconstrained results match it exactly.
  std::vector<double> prev(m + 1, kInf), curr(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    std::fill(curr.begin(), curr.end(), kInf);
    std::size_t lo = 1, hi = m;
    if (window) {
      lo = i > *window ? i - *window : 1;
      hi = std::min(m, i + *window);
    }
    double row_min = kInf;
    for (std::size_t j = lo; j <= hi; ++j) {
      const double cost = std::abs(a[i - 1] - b[j - 1]);
      curr[j] = cost + std::min({prev[j], curr[j - 1], prev[j - 1]});
      row_min = std::min(row_min, curr[j]);
    }
    if (row_min > cutoff) return kInf;
    std::swap(prev, curr);
  }
  return prev[m];
}

}  // namespace

double dtw_distance(std::span<const double> a, std::span<const double> b,
                    std::optional<std::size_t> window) {
  return dtw_impl(a, b, window, kInf);
}

double dtw_distance_bounded(std::span<const double> a, std::span<const double> b,
                            std::optional<std::size_t> window, double cutoff) {
  return dtw_impl(a, b, window, cutoff);
}

DtwKnnModel fit_dtw_knn(const std::vector<std::vector<std::vector<double>>>& channels,
                        const std::vector<std::size_t>& labels, std::size_t n_classes,
                        const DtwKnnParams& params) {
  if (channels.empty() || channels.size() != labels.size()) {
    throw InvariantError("DTW-KNN needs one label per prototype");
  }
  if (params.k < 1) throw ConfigError("k must be >= 1");
  std::vector<bool> seen(n_classes, false);
  for (std::size_t label : labels) seen.at(label) = true;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (!seen[c]) throw InvariantError("DTW-KNN needs at least one trace per class");
  }

  DtwKnnModel model;
  model.k = params.k;
  model.window = params.window;
  model.n_classes = n_classes;
  model.n_events = channels.front().size();
  model.samples_per_trace = channels.front().front().size();
  model.labels = labels;
  model.prototypes = channels;
  return model;
}

std::vector<double> DtwKnnModel::scores(const std::vector<std::vector<double>>& test) const {
  // k best (distance, prototype index) pairs; index breaks distance ties the
  // same way training order would.
  std::vector<std::pair<double, std::size_t>> best;
  const std::size_t k = std::min(this->k, prototypes.size());
  for (std::size_t p = 0; p < prototypes.size(); ++p) {
    const double cutoff = best.size() == k ? best.back().first : kInf;
    double total = 0.0;
    for (std::size_t e = 0; e < n_events && total <= cutoff; ++e) {
      const double d = dtw_distance_bounded(test[e], prototypes[p][e], window,
                                            cutoff == kInf ? kInf : cutoff - total);
      total = d == kInf ? kInf : total + d;
    }
    if (total == kInf && best.size() == k) continue;
    std::pair<double, std::size_t> entry{total, p};
    auto pos = std::lower_bound(best.begin(), best.end(), entry);
    if (best.size() < k) {
      best.insert(pos, entry);
    } else if (pos != best.end()) {
      best.insert(pos, entry);
      best.pop_back();
    }
  }

  std::vector<double> votes(n_classes, 0.0);
  std::vector<double> dist_sum(n_classes, 0.0);
  for (const auto& [dist, idx] : best) {
    votes[labels[idx]] += 1.0;
    dist_sum[labels[idx]] += dist;
  }

  // Integer votes dominate; a bounded distance bonus implements the
  // smaller-mean-distance tie-break, and exact ties fall back to class order
  // via first-max.
  std::vector<double> raw(n_classes, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (votes[c] > 0.0) {
      const double mean_dist = dist_sum[c] / votes[c];
      raw[c] = votes[c] + 0.5 / (1.0 + mean_dist);
    }
    total += raw[c];
  }
  for (double& v : raw) v /= total;
  return raw;
}

}  // namespace leakedweb
