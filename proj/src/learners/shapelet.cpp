#include "leakedweb/learners/shapelet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "leakedweb/learners/vectorize.hpp"
#include "leakedweb/rng.hpp"

namespace leakedweb {

double entropy_bits(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

double min_shapelet_distance(std::span<const double> series, std::span<const double> shapelet) {
  const std::size_t n = series.size();
  const std::size_t len = shapelet.size();
  if (len == 0 || n < len) {
    throw InvariantError("series shorter than shapelet (" + std::to_string(n) + " < " +
                         std::to_string(len) + ")");
  }

  // Prefix sums make per-window mean/std O(1); the inner loop early-abandons
  // against the best alignment so far.
  std::vector<double> sum(n + 1, 0.0), sum_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sum[i + 1] = sum[i] + series[i];
    sum_sq[i + 1] = sum_sq[i] + series[i] * series[i];
  }

  double best = std::numeric_limits<double>::infinity();
  const double inv_len = 1.0 / static_cast<double>(len);
  for (std::size_t start = 0; start + len <= n; ++start) {
    const double mean = (sum[start + len] - sum[start]) * inv_len;
    double var = (sum_sq[start + len] - sum_sq[start]) * inv_len - mean * mean;
    double inv_sd = 0.0;
    if (var > 1e-18) inv_sd = 1.0 / std::sqrt(var);
    double acc = 0.0;
    for (std::size_t i = 0; i < len && acc < best; ++i) {
      const double w = (series[start + i] - mean) * inv_sd;  // 0 for constant windows
      const double d = w - shapelet[i];
      acc += d * d;
    }
    best = std::min(best, acc);
  }
  return std::sqrt(best * inv_len);
}

namespace {

struct Candidate {
  std::size_t node_instance = 0;  // position within the node's instance list
  std::size_t event = 0;
  std::size_t start = 0;
  std::size_t length = 0;
};

struct BestSplit {
  double gain = -1.0;
  std::size_t order = std::numeric_limits<std::size_t>::max();  // enumeration index
  double threshold = 0.0;
  Candidate candidate;
  bool found = false;
};

void merge_best(BestSplit& into, const BestSplit& other) {
  constexpr double kEps = 1e-12;
  if (!other.found) return;
  if (!into.found || other.gain > into.gain + kEps ||
      (std::abs(other.gain - into.gain) <= kEps &&
       (other.order < into.order ||
        (other.order == into.order && other.threshold < into.threshold)))) {
    into = other;
  }
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<std::vector<double>>>& channels,
              const std::vector<std::size_t>& labels, std::size_t n_classes,
              const ShapeletParams& params)
      : channels_(channels), labels_(labels), n_classes_(n_classes), params_(params) {
    trace_len_ = channels.front().front().size();
    max_len_ = params.max_len > 0 ? params.max_len : std::max<std::size_t>(1, trace_len_ / 2);
    max_len_ = std::min(max_len_, trace_len_);
  }

  int grow(ShapeletModel& model, std::vector<std::size_t>& instances, std::size_t depth,
           std::size_t node_counter) {
    std::vector<std::size_t> counts(n_classes_, 0);
    for (std::size_t idx : instances) counts[labels_[idx]]++;
    const double parent_entropy = entropy_bits(counts);

    auto make_leaf = [&]() {
      ShapeletModel::Node leaf;
      leaf.class_counts = counts;
      model.nodes.push_back(std::move(leaf));
      return static_cast<int>(model.nodes.size() - 1);
    };

    if (parent_entropy == 0.0 || depth >= params_.max_depth || instances.size() < 2 ||
        trace_len_ < params_.min_len) {
      return make_leaf();
    }

    const BestSplit best = search(instances, counts, parent_entropy, node_counter);
    if (!best.found || best.gain <= 1e-12) return make_leaf();

    const auto& source = channels_[instances[best.candidate.node_instance]][best.candidate.event];
    std::vector<double> shapelet(source.begin() + static_cast<std::ptrdiff_t>(best.candidate.start),
                                 source.begin() + static_cast<std::ptrdiff_t>(best.candidate.start +
                                                                              best.candidate.length));
    znormalize(shapelet);

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t idx : instances) {
      const double d = min_shapelet_distance(channels_[idx][best.candidate.event], shapelet);
      (d <= best.threshold ? left_idx : right_idx).push_back(idx);
    }
    if (left_idx.empty() || right_idx.empty()) return make_leaf();  // numeric edge

    ShapeletModel::Node node;
    node.event = static_cast<int>(best.candidate.event);
    node.values = std::move(shapelet);
    node.threshold = best.threshold;
    model.nodes.push_back(std::move(node));
    const auto me = static_cast<int>(model.nodes.size() - 1);
    instances.clear();
    instances.shrink_to_fit();
    const int left = grow(model, left_idx, depth + 1, node_counter * 2 + 1);
    const int right = grow(model, right_idx, depth + 1, node_counter * 2 + 2);
    model.nodes[static_cast<std::size_t>(me)].left = left;
    model.nodes[static_cast<std::size_t>(me)].right = right;
    return me;
  }

 private:
  Candidate decompose(std::size_t flat) const {
    // Lexicographic (instance, event, length, start) enumeration.
    Candidate cand;
    const std::size_t per_len = starts_per_length();
    const std::size_t per_event = per_len;  // starts summed over lengths
    const std::size_t per_instance = n_events() * per_event;
    cand.node_instance = flat / per_instance;
    std::size_t rest = flat % per_instance;
    cand.event = rest / per_event;
    rest %= per_event;
    for (std::size_t len = params_.min_len; len <= max_len_; ++len) {
      const std::size_t starts = trace_len_ - len + 1;
      if (rest < starts) {
        cand.length = len;
        cand.start = rest;
        return cand;
      }
      rest -= starts;
    }
    throw InvariantError("candidate index out of range");
  }

  std::size_t starts_per_length() const {
    std::size_t total = 0;
    for (std::size_t len = params_.min_len; len <= max_len_; ++len) total += trace_len_ - len + 1;
    return total;
  }

  std::size_t n_events() const { return channels_.front().size(); }

  BestSplit evaluate(const Candidate& cand, std::size_t order,
                     const std::vector<std::size_t>& instances,
                     const std::vector<std::size_t>& counts, double parent_entropy) const {
    const auto& source = channels_[instances[cand.node_instance]][cand.event];
    std::vector<double> shapelet(source.begin() + static_cast<std::ptrdiff_t>(cand.start),
                                 source.begin() + static_cast<std::ptrdiff_t>(cand.start + cand.length));
    znormalize(shapelet);

    std::vector<std::pair<double, std::size_t>> dists(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
      dists[i] = {min_shapelet_distance(channels_[instances[i]][cand.event], shapelet),
                  labels_[instances[i]]};
    }
    std::sort(dists.begin(), dists.end());

    const double n = static_cast<double>(instances.size());
    std::vector<std::size_t> left(n_classes_, 0);
    std::vector<std::size_t> right = counts;
    BestSplit best;
    for (std::size_t pos = 0; pos + 1 < dists.size(); ++pos) {
      left[dists[pos].second]++;
      right[dists[pos].second]--;
      if (dists[pos].first == dists[pos + 1].first) continue;
      const double n_left = static_cast<double>(pos + 1);
      const double n_right = n - n_left;
      const double gain = parent_entropy - (n_left / n) * entropy_bits(left) -
                          (n_right / n) * entropy_bits(right);
      BestSplit option;
      option.found = true;
      option.gain = gain;
      option.order = order;
      option.threshold = dists[pos].first + (dists[pos + 1].first - dists[pos].first) / 2.0;
      if (option.threshold >= dists[pos + 1].first) option.threshold = dists[pos].first;
      option.candidate = cand;
      merge_best(best, option);
    }
    return best;
  }

  BestSplit search(const std::vector<std::size_t>& instances,
                   const std::vector<std::size_t>& counts, double parent_entropy,
                   std::size_t node_counter) const {
    const std::size_t per_instance = n_events() * starts_per_length();
    const std::size_t total = instances.size() * per_instance;
    if (total == 0) return {};

    std::vector<std::size_t> flat_ids;
    if (total <= params_.max_candidates) {
      flat_ids.resize(total);
      for (std::size_t i = 0; i < total; ++i) flat_ids[i] = i;
    } else {
      Rng rng(derive_seed(params_.seed, {12, node_counter}));
      flat_ids.resize(params_.max_candidates);
      for (auto& id : flat_ids) id = static_cast<std::size_t>(rng.below(total));
    }

    const std::size_t workers =
        std::min<std::size_t>(flat_ids.size(), std::max(1u, std::thread::hardware_concurrency()));
    std::vector<BestSplit> local(workers);
    auto run_range = [&](std::size_t worker) {
      for (std::size_t i = worker; i < flat_ids.size(); i += workers) {
        merge_best(local[worker],
                   evaluate(decompose(flat_ids[i]), i, instances, counts, parent_entropy));
      }
    };
    if (workers <= 1) {
      run_range(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
      for (auto& th : pool) th.join();
    }
    BestSplit best;
    for (const auto& candidate_best : local) merge_best(best, candidate_best);
    return best;
  }

  const std::vector<std::vector<std::vector<double>>>& channels_;
  const std::vector<std::size_t>& labels_;
  std::size_t n_classes_;
  ShapeletParams params_;
  std::size_t trace_len_ = 0;
  std::size_t max_len_ = 0;
};

}  // namespace

ShapeletModel fit_shapelet(const std::vector<std::vector<std::vector<double>>>& channels,
                           const std::vector<std::size_t>& labels, std::size_t n_classes,
                           const ShapeletParams& params) {
  if (channels.empty() || channels.size() != labels.size()) {
    throw InvariantError("shapelet training needs one label per trace");
  }
  if (params.min_len < 1) throw ConfigError("min_len must be >= 1");

  ShapeletModel model;
  model.n_classes = n_classes;
  model.n_events = channels.front().size();
  model.samples_per_trace = channels.front().front().size();

  TreeBuilder builder(channels, labels, n_classes, params);
  std::vector<std::size_t> instances(channels.size());
  for (std::size_t i = 0; i < instances.size(); ++i) instances[i] = i;
  builder.grow(model, instances, 0, 0);
  return model;
}

std::vector<double> ShapeletModel::scores(const std::vector<std::vector<double>>& channels) const {
  std::size_t node = 0;
  while (nodes[node].event >= 0) {
    const auto& current = nodes[node];
    const double d =
        min_shapelet_distance(channels[static_cast<std::size_t>(current.event)], current.values);
    node = static_cast<std::size_t>(d <= current.threshold ? current.left : current.right);
  }
  const auto& counts = nodes[node].class_counts;
  double total = 0.0;
  for (std::size_t c : counts) total += static_cast<double>(c);
  std::vector<double> out(n_classes, 0.0);
  for (std::size_t c = 0; c < n_classes; ++c) out[c] = static_cast<double>(counts[c]) / total;
  return out;
}

}  // namespace leakedweb
