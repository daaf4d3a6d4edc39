#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

struct MonitorConfig {
  std::vector<std::string> target_process_names = {"firefox"};
  std::vector<std::string> events = default_event_names(4);
  double sampling_rate_hz = 1.0;
  std::size_t max_duration_s = 60;
  std::size_t scan_interval_s = 1;

  void validate() const;
};

/// Integer from /proc/sys/kernel/perf_event_paranoid. Live collection must
/// refuse when the level is >= 4; levels above 0 cannot observe other users'
/// processes. Missing file means the platform has no perf interface.
int check_paranoid_level();

/// Pids whose /proc/<pid>/comm matches a target name (comm truncates names
/// to 15 bytes; both spellings match). Ascending pid order; the scanning
/// process itself is never returned; exiting processes are skipped.
std::vector<std::pair<int, std::string>> scan_processes(const MonitorConfig& config);

/// One (requested -> substituted) pair per hardware event that failed to
/// open and was downgraded to a software counter.
using FallbackList = std::vector<std::pair<std::string, std::string>>;

/// Live sampler attached to one pid. Counters are opened per event with
/// thread inheritance, read on absolute-deadline ticks, scaled by
/// enabled/running time, and emitted as per-interval deltas.
class TraceHandle {
 public:
  virtual ~TraceHandle() = default;

  /// Blocks until the monitor finishes (stop request, pid exit, or
  /// max_duration) and yields the trace collected so far.
  virtual Trace wait() = 0;

  /// Requests an early stop; wait() still returns the partial trace.
  virtual void stop() = 0;

  virtual const FallbackList& fallbacks() const = 0;
};

/// Throws UnsupportedPlatformError when perf events are unavailable and
/// InvariantError when the paranoid level forbids collection. Hardware
/// events that fail to open individually downgrade to software counters,
/// reported via fallbacks().
std::unique_ptr<TraceHandle> start_monitor(int pid, const MonitorConfig& config);

/// Replay source: honors the same trace-handle contract but reads a recorded
/// CSV, so downstream consumers are testable without perf access.
std::unique_ptr<TraceHandle> start_replay(const std::filesystem::path& csv_path,
                                          const std::string& label);

struct OverheadReport {
  std::vector<double> rates_hz;
  std::vector<double> victim_runtime_s;  // per-rate mean
  double baseline_runtime_s = 0.0;       // unmonitored mean
  std::vector<double> overhead_pct;      // (runtime/baseline - 1) * 100
  std::size_t repetitions = 0;
};

/// Runs the victim command to completion `repetitions` times unmonitored,
/// then under monitoring at each rate, and reports mean overheads.
OverheadReport run_overhead_bench(const std::string& victim_command,
                                  const std::vector<double>& rates_hz, std::size_t repetitions,
                                  const std::vector<std::string>& events = default_event_names(4));

}  // namespace leakedweb
