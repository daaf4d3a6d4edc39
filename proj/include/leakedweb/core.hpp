#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leakedweb/error.hpp"

namespace leakedweb {

/// One of the 16 hardware events collected by the attack, with its rank
/// from the event-importance table.
struct EventSpec {
  std::string name;
  int paper_rank = 0;  // 1..16

  bool operator==(const EventSpec&) const = default;
};

/// The full 16-event registry in rank order (rank 1 first).
const std::vector<EventSpec>& event_table();

/// Rank lookup; nullopt for names outside the registry.
std::optional<int> event_table_rank(std::string_view name);

/// The top-n event names by table rank (default selection is the top 4).
std::vector<std::string> default_event_names(std::size_t top_n = 4);

/// Reserved open-world label for pooled unknown sites.
inline constexpr const char* kNonSensitiveLabel = "non-sensitive";

/// Dense row-major matrix of per-second counter deltas.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using CountMatrix = Matrix<std::uint64_t>;

enum class TraceSource { live, synthetic, replay };

std::string_view to_string(TraceSource source);
TraceSource trace_source_from_string(std::string_view text);

/// Provenance carried next to the sample matrix; not part of the CSV body.
struct TraceMeta {
  TraceSource source = TraceSource::synthetic;
  double sampling_rate_hz = 1.0;
  std::int64_t collected_at_unix = 0;

  bool operator==(const TraceMeta&) const = default;
};

/// One website visit: a time-ordered matrix of per-second counter deltas.
/// Columns follow `events` order. Immutable by convention once built.
struct Trace {
  std::string label;
  std::vector<std::string> events;
  CountMatrix samples;  // n_samples x events.size()
  TraceMeta meta;

  std::size_t n_samples() const { return samples.rows(); }
  std::size_t n_events() const { return events.size(); }

  /// Throws InvariantError on shape/value violations.
  void validate() const;

  bool operator==(const Trace&) const = default;
};

enum class World { closed, open };

std::string_view to_string(World world);

/// A labeled collection of traces sharing one event column list.
struct Dataset {
  std::vector<Trace> traces;
  World world = World::closed;
  std::vector<std::string> class_list;  // ordered distinct labels

  /// Builds class_list in first-appearance order and validates.
  static Dataset from_traces(std::vector<Trace> traces, World world);

  void validate() const;

  const std::vector<std::string>& events() const;
  std::size_t class_index(std::string_view label) const;  // throws if absent

  bool operator==(const Dataset&) const = default;
};

/// Percentage-split parameters (70/30 by default).
struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool stratified = true;
};

// ---- Trace CSV (external interface) ----
// Header `t,<event1>,...,<eventK>`; one row per sample: second index from 0,
// then K non-negative integers. LF endings, UTF-8.

/// Returns the number of bytes written.
std::size_t write_trace_csv(const Trace& trace, std::ostream& sink);

/// Serialize just the CSV body to a string (used by the wire protocol).
std::string trace_csv_string(const Trace& trace);

Trace read_trace_csv(std::istream& source, std::string label, const TraceMeta& meta);
Trace parse_trace_csv(std::string_view csv, std::string label, const TraceMeta& meta);

// ---- Dataset persistence ----
// Directory of per-trace CSV files plus manifest.json:
// [{"label":..., "path":..., "source":..., "sampling_rate_hz":...}, ...]

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& manifest_path);

// ---- Split ----

/// Deterministic stratified (or plain) percentage split. Train/test are
/// disjoint, their union is the input, per-class train counts are
/// round(train_fraction * n_c) within +-1 and always in [1, n_c - 1].
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

// ---- Dataset shaping helpers used by training and sweeps ----

/// Keep only the named event columns, in the given order.
Dataset project_events(const Dataset& dataset, const std::vector<std::string>& events);

/// Keep only the first n samples of every trace (monitoring-duration sweep).
Dataset truncate_samples(const Dataset& dataset, std::size_t n);

/// Keep at most n traces per class, chosen deterministically by seed.
Dataset subsample_per_class(const Dataset& dataset, std::size_t n, std::uint64_t seed);

}  // namespace leakedweb
