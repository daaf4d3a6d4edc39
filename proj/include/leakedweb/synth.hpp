#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

/// One page-load phase: samples in [start_s, start_s + length_s) are
/// multiplied by a per-event factor.
struct BurstWindow {
  double start_s = 0.0;
  double length_s = 0.0;
  std::vector<double> per_event_multiplier;

  bool operator==(const BurstWindow&) const = default;
};

/// Deterministic per-website counter signature.
struct SiteSignature {
  std::string label;
  std::vector<std::string> events;
  std::vector<double> base_rates;   // mean counts per second, > 0
  std::vector<double> trend;        // linear drift per second
  std::vector<BurstWindow> bursts;
  double noise_cv = 0.0;            // coefficient of variation, in [0,1)

  void validate() const;

  bool operator==(const SiteSignature&) const = default;
};

struct GeneratorConfig {
  std::vector<SiteSignature> signatures;
  std::size_t n_traces_per_site = 1;
  std::size_t samples_per_trace = 60;
  std::uint64_t seed = 0;
  /// Unique throwaway sites pooled under the "non-sensitive" label,
  /// one trace each.
  std::size_t open_world_extra = 0;

  void validate() const;
};

/// Pure function of the config: sample(t,e) =
/// max(0, round((base_e + trend_e*t) * burst_mult(t,e) * (1 + N(0, noise_cv)))).
Dataset generate(const GeneratorConfig& config);

// ---- Signature files (external interface) ----

std::vector<SiteSignature> load_signatures(const std::filesystem::path& path);
void save_signatures(const std::vector<SiteSignature>& signatures, const std::filesystem::path& path);

// ---- Brute-force oracles used by tests ----

/// Textbook O(nm) full-table DTW with |a-b| local cost and unconstrained
/// warping. Equivalence oracle for the banded production implementation.
double oracle_dtw(std::span<const double> a, std::span<const double> b);

/// Two-pass population-moment Pearson coefficient. Throws on zero variance.
double oracle_pearson(std::span<const double> x, std::span<const double> y);

// ---- Desk-scale benchmark ----
// Fixed synthetic stand-in for the live 30-site corpus: 30 signatures over
// the full 16-event registry, calibrated class overlap at noise_cv = 0.25.

struct DeskBenchmark {
  /// 30 sensitive-site signatures over all 16 registry events.
  static std::vector<SiteSignature> signatures();

  /// Closed world: 30 sites x 70 traces x 60 samples over the top-4 events.
  static GeneratorConfig closed_world();

  /// Same signatures over all 16 events (feature-count sweeps).
  static GeneratorConfig closed_world_16ev();

  /// Closed world plus 500 single-trace non-sensitive sites.
  static GeneratorConfig open_world();
};

}  // namespace leakedweb
