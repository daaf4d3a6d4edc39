#include "leakedweb/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace leakedweb {

using json = nlohmann::json;

std::string_view to_string(InstancePolicy policy) {
  return policy == InstancePolicy::per_sample ? "per_sample" : "per_trace_summary";
}

InstancePolicy instance_policy_from_string(std::string_view text) {
  if (text == "per_sample") return InstancePolicy::per_sample;
  if (text == "per_trace_summary") return InstancePolicy::per_trace_summary;
  throw ConfigError("unknown instance policy '" + std::string(text) + "'");
}

std::vector<std::size_t> InstanceMatrix::event_columns(std::size_t event_idx) const {
  if (event_idx >= event_names.size()) throw InvariantError("event index out of range");
  if (policy == InstancePolicy::per_sample) return {event_idx};
  return {2 * event_idx, 2 * event_idx + 1};
}

InstanceMatrix build_instances(const Dataset& dataset, InstancePolicy policy) {
  dataset.validate();
  InstanceMatrix matrix;
  matrix.policy = policy;
  matrix.class_list = dataset.class_list;
  matrix.event_names = dataset.events();
  const std::size_t n_events = matrix.event_names.size();

  if (policy == InstancePolicy::per_sample) {
    std::size_t total_rows = 0;
    for (const auto& trace : dataset.traces) total_rows += trace.n_samples();
    matrix.rows = Matrix<double>(total_rows, n_events);
    matrix.labels.reserve(total_rows);
    std::size_t row = 0;
    for (const auto& trace : dataset.traces) {
      const std::size_t cls = dataset.class_index(trace.label);
      for (std::size_t r = 0; r < trace.n_samples(); ++r, ++row) {
        for (std::size_t e = 0; e < n_events; ++e) {
          matrix.rows(row, e) = static_cast<double>(trace.samples(r, e));
        }
        matrix.labels.push_back(cls);
      }
    }
  } else {
    matrix.rows = Matrix<double>(dataset.traces.size(), 2 * n_events);
    matrix.labels.reserve(dataset.traces.size());
    for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
      const auto& trace = dataset.traces[i];
      const double n = static_cast<double>(trace.n_samples());
      for (std::size_t e = 0; e < n_events; ++e) {
        double mean = 0.0;
        for (std::size_t r = 0; r < trace.n_samples(); ++r) {
          mean += static_cast<double>(trace.samples(r, e));
        }
        mean /= n;
        double var = 0.0;
        for (std::size_t r = 0; r < trace.n_samples(); ++r) {
          const double d = static_cast<double>(trace.samples(r, e)) - mean;
          var += d * d;
        }
        var /= n;
        matrix.rows(i, 2 * e) = mean;
        matrix.rows(i, 2 * e + 1) = std::sqrt(var);
      }
      matrix.labels.push_back(dataset.class_index(trace.label));
    }
  }
  return matrix;
}

namespace {

// Population-moment |Pearson| between a column and a one-vs-rest indicator.
// Written out directly; tests cross-check against the brute-force oracle.
double column_score(const Matrix<double>& rows, std::size_t col,
                    const std::vector<std::size_t>& labels, std::size_t n_classes) {
  const std::size_t n = rows.rows();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += rows(i, col);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rows(i, col) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  if (var <= 0.0) return 0.0;  // degenerate feature: lowest possible score

  std::vector<std::size_t> class_counts(n_classes, 0);
  for (std::size_t label : labels) class_counts[label]++;

  double weighted = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (class_counts[c] == 0) continue;
    const double p = static_cast<double>(class_counts[c]) / static_cast<double>(n);
    const double indicator_var = p * (1.0 - p);
    if (indicator_var <= 0.0) continue;  // single-class data; guarded by callers
    double cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double indicator = labels[i] == c ? 1.0 : 0.0;
      cov += (rows(i, col) - mean) * (indicator - p);
    }
    cov /= static_cast<double>(n);
    weighted += p * std::abs(cov / std::sqrt(var * indicator_var));
  }
  return weighted;
}

}  // namespace

double score_feature(const InstanceMatrix& matrix, std::size_t event_idx) {
  if (matrix.rows.rows() == 0) throw InvariantError("instance matrix is empty");
  double best = 0.0;
  for (std::size_t col : matrix.event_columns(event_idx)) {
    best = std::max(best, column_score(matrix.rows, col, matrix.labels, matrix.class_list.size()));
  }
  return best;
}

FeatureRanking rank_features(const Dataset& dataset, InstancePolicy policy) {
  std::size_t distinct = 0;
  {
    std::vector<bool> seen(dataset.class_list.size(), false);
    for (const auto& trace : dataset.traces) {
      const std::size_t c = dataset.class_index(trace.label);
      if (!seen[c]) {
        seen[c] = true;
        ++distinct;
      }
    }
  }
  if (distinct < 2) throw InvariantError("feature ranking needs at least two classes");

  InstanceMatrix matrix = build_instances(dataset, policy);
  FeatureRanking ranking;
  ranking.policy = policy;
  ranking.trace_count = dataset.traces.size();
  ranking.class_count = distinct;
  for (std::size_t e = 0; e < matrix.event_names.size(); ++e) {
    ranking.entries.push_back({matrix.event_names[e], score_feature(matrix, e)});
  }
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const FeatureRanking::Entry& a, const FeatureRanking::Entry& b) {
                     if (a.score != b.score) return a.score > b.score;
                     const int ra = event_table_rank(a.event).value_or(std::numeric_limits<int>::max());
                     const int rb = event_table_rank(b.event).value_or(std::numeric_limits<int>::max());
                     if (ra != rb) return ra < rb;
                     return a.event < b.event;
                   });
  return ranking;
}

std::vector<std::string> FeatureRanking::top_k(std::size_t k) const {
  if (k < 1) throw ConfigError("top_k requires k >= 1");
  k = std::min(k, entries.size());
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(entries[i].event);
  return out;
}

void save_ranking(const FeatureRanking& ranking, const std::filesystem::path& path) {
  json entries = json::array();
  for (const auto& entry : ranking.entries) {
    entries.push_back({{"event", entry.event}, {"score", entry.score}});
  }
  json doc = {{"entries", entries},
              {"trace_count", ranking.trace_count},
              {"class_count", ranking.class_count},
              {"policy", std::string(to_string(ranking.policy))}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write ranking file " + path.string());
  out << doc.dump(2) << '\n';
}

FeatureRanking load_ranking(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ranking file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad ranking JSON: ") + e.what());
  }
  FeatureRanking ranking;
  for (const auto& item : doc.at("entries")) {
    ranking.entries.push_back({item.at("event").get<std::string>(), item.at("score").get<double>()});
  }
  ranking.trace_count = doc.value("trace_count", 0);
  ranking.class_count = doc.value("class_count", 0);
  ranking.policy = instance_policy_from_string(doc.value("policy", "per_sample"));
  return ranking;
}

}  // namespace leakedweb
