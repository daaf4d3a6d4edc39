#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "leakedweb/core.hpp"
#include "leakedweb/learners/model.hpp"
#include "leakedweb/synth.hpp"

namespace leakedweb {

/// Rows are actual classes, columns predicted; total equals the number of
/// evaluated traces.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  Matrix<std::uint64_t> counts;

  std::uint64_t total() const;
  std::uint64_t diagonal() const;
};

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;  // 2pr/(p+r), or 0 when p + r == 0
  std::uint64_t support = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_f = 0.0;
  double weighted_f = 0.0;  // support-weighted mean, the headline F figure
  std::map<std::string, std::string> sweep_coords;
  ConfusionMatrix confusion;
};

/// Exact metric arithmetic from predicted/actual pairs built via one predict
/// call per test trace.
EvalReport evaluate(const TrainedModel& model, const Dataset& test);

/// Metrics from an already-counted confusion matrix (used by tests and by
/// report assembly).
EvalReport report_from_confusion(ConfusionMatrix confusion);

// ---- Experiment sweeps ----

struct SweepSpec {
  std::vector<ModelFamily> families = {ModelFamily::logit_boost};
  std::vector<std::size_t> train_traces_grid = {50, 40, 30, 20, 10, 5};
  std::vector<std::size_t> feature_count_grid = {8, 6, 4, 2};
  std::vector<std::size_t> samples_grid = {60, 40, 20, 10, 5};
  World world = World::closed;
  std::size_t repetitions = 1;
  std::uint64_t base_seed = 0;
  /// Operating point held fixed while one axis varies.
  std::size_t baseline_train_traces = 50;
  std::size_t baseline_features = 4;
  std::size_t baseline_samples = 60;
  double train_fraction = 0.7143;  // yields the 50/20 split on 70-trace sites
};

using SweepSource = std::variant<GeneratorConfig, Dataset>;

struct SweepOutcome {
  std::vector<EvalReport> reports;
  std::vector<std::string> warnings;  // skipped grid points
};

/// One-factor-at-a-time sweep over the three grids for every family.
/// Feature ranking runs on the training split only; repetition seeds derive
/// from base_seed by counter.
SweepOutcome run_sweep(const SweepSource& source, const SweepSpec& spec);

/// Merge extra unique-site traces as the pooled "non-sensitive" class.
/// Duplicate extra traces are dropped with a warning; label collisions with
/// sensitive classes are errors.
Dataset open_world_prepare(const Dataset& closed, const Dataset& extra_non_sensitive);

enum class ReportFormat { json, csv, markdown_table };

ReportFormat report_format_from_string(std::string_view text);

/// Stable column order, 4-decimal numeric fields.
void emit_report(const std::vector<EvalReport>& reports, ReportFormat format, std::ostream& out);
std::string report_string(const std::vector<EvalReport>& reports, ReportFormat format);

/// JSON emission round-trips.
std::vector<EvalReport> parse_report_json(std::string_view text);

}  // namespace leakedweb
