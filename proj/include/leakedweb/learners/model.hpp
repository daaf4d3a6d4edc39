#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "leakedweb/core.hpp"
#include "leakedweb/learners/bop.hpp"
#include "leakedweb/learners/dtw.hpp"
#include "leakedweb/learners/logit_boost.hpp"
#include "leakedweb/learners/random_forest.hpp"
#include "leakedweb/learners/shapelet.hpp"

namespace leakedweb {

enum class ModelFamily { random_forest, logit_boost, dtw_knn, bop, shapelet };

std::string_view to_string(ModelFamily family);
ModelFamily model_family_from_string(std::string_view text);

struct PredictionResult {
  std::string label;
  std::vector<double> scores;  // class_list order, non-negative, sums to 1

  bool operator==(const PredictionResult&) const = default;
};

/// A fitted classifier of any family. Immutable after training; predictions
/// are a pure function of (model, trace); JSON round-trips to an equivalent
/// predictor.
struct TrainedModel {
  static constexpr int kFormatVersion = 1;

  ModelFamily family = ModelFamily::random_forest;
  std::vector<std::string> class_list;
  std::vector<std::string> events;  // selected channels, in training order
  std::size_t samples_per_trace = 0;
  std::uint64_t seed = 0;
  std::variant<RandomForestModel, LogitBoostModel, DtwKnnModel, BopModel, ShapeletModel> impl;
};

// Dataset-level training entry points. Feature selection happens before
// these calls (project_events); each trains on the dataset's columns as-is.
TrainedModel train_random_forest(const Dataset& train, RandomForestParams params = {});
TrainedModel train_logit_boost(const Dataset& train, LogitBoostParams params = {});
TrainedModel train_dtw_knn(const Dataset& train, DtwKnnParams params = {});
TrainedModel train_bop(const Dataset& train, BopParams params = {});
TrainedModel train_shapelet(const Dataset& train, ShapeletParams params = {});

/// Convenience dispatcher used by the CLI and sweeps; default params per
/// family, seed applied where the family is randomized.
TrainedModel train_family(ModelFamily family, const Dataset& train, std::uint64_t seed);

/// Family dispatch. The trace must carry every model event column; length
/// mismatches are padded (repeat final sample) or truncated.
PredictionResult predict(const TrainedModel& model, const Trace& trace);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace leakedweb
