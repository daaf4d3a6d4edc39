#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

enum class InstancePolicy { per_sample, per_trace_summary };

std::string_view to_string(InstancePolicy policy);
InstancePolicy instance_policy_from_string(std::string_view text);

/// Flat instance table derived from a dataset. With per_sample each 1 s row
/// is an instance; with per_trace_summary each trace contributes one row of
/// per-event (mean, stddev) features.
struct InstanceMatrix {
  Matrix<double> rows;                 // n_instances x n_columns
  std::vector<std::size_t> labels;     // class index per row
  std::vector<std::string> class_list;
  std::vector<std::string> event_names;
  InstancePolicy policy = InstancePolicy::per_sample;

  /// Column indices belonging to one event (1 for per_sample, 2 for summary).
  std::vector<std::size_t> event_columns(std::size_t event_idx) const;
};

InstanceMatrix build_instances(const Dataset& dataset, InstancePolicy policy);

/// Correlation-attribute score of one event in [0,1]: the class-frequency
/// weighted mean of |Pearson(column, one-vs-rest indicator)| over all classes
/// present. Zero-variance columns score 0 (degenerate features still rank,
/// lowest). For summary instances the event takes the max over its columns.
double score_feature(const InstanceMatrix& matrix, std::size_t event_idx);

struct FeatureRanking {
  struct Entry {
    std::string event;
    double score = 0.0;

    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;  // score descending; ties by table rank, then name
  std::size_t trace_count = 0;
  std::size_t class_count = 0;
  InstancePolicy policy = InstancePolicy::per_sample;

  std::vector<std::string> top_k(std::size_t k) const;
};

FeatureRanking rank_features(const Dataset& dataset,
                             InstancePolicy policy = InstancePolicy::per_sample);

// `rank` CLI emits this file; `train` consumes it.
void save_ranking(const FeatureRanking& ranking, const std::filesystem::path& path);
FeatureRanking load_ranking(const std::filesystem::path& path);

}  // namespace leakedweb
