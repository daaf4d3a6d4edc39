#include "leakedweb/collector.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#ifdef __linux__
#include <linux/perf_event.h>
#include <signal.h>
#include <sys/ioctl.h>
#include <sys/syscall.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>
#endif

namespace leakedweb {

void MonitorConfig::validate() const {
  if (events.empty()) throw ConfigError("monitor needs at least one event");
  if (!(sampling_rate_hz > 0)) throw ConfigError("sampling_rate_hz must be positive");
  if (max_duration_s < 1) throw ConfigError("max_duration_s must be >= 1");
  if (scan_interval_s < 1) throw ConfigError("scan_interval_s must be >= 1");
}

int check_paranoid_level() {
#ifndef __linux__
  throw UnsupportedPlatformError("perf_event_paranoid exists only on Linux");
#else
  std::ifstream in("/proc/sys/kernel/perf_event_paranoid");
  if (!in) {
    throw UnsupportedPlatformError(
        "/proc/sys/kernel/perf_event_paranoid is absent; this kernel exposes no perf interface");
  }
  int level = 0;
  in >> level;
  if (!in) throw ParseError("unreadable perf_event_paranoid value");
  return level;
#endif
}

std::vector<std::pair<int, std::string>> scan_processes(const MonitorConfig& config) {
  config.validate();
  std::vector<std::pair<int, std::string>> matches;
#ifdef __linux__
  const int self = getpid();
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator("/proc", ec)) {
    const std::string name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](unsigned char c) {
          return std::isdigit(c);
        })) {
      continue;
    }
    int pid = 0;
    std::from_chars(name.data(), name.data() + name.size(), pid);
    if (pid == self) continue;

    std::ifstream comm_file(entry.path() / "comm");
    if (!comm_file) continue;  // raced with process exit
    std::string comm;
    std::getline(comm_file, comm);

    for (const auto& target : config.target_process_names) {
      // /proc/<pid>/comm truncates to 15 bytes.
      const std::string truncated = target.size() > 15 ? target.substr(0, 15) : target;
      if (comm == target || comm == truncated) {
        matches.emplace_back(pid, comm);
        break;
      }
    }
  }
  std::sort(matches.begin(), matches.end());
#else
  throw UnsupportedPlatformError("process scanning requires procfs");
#endif
  return matches;
}

#ifdef __linux__

namespace {

struct PerfEventDesc {
  const char* name;
  std::uint32_t type;
  std::uint64_t config;
};

constexpr std::uint64_t hw_cache(std::uint64_t cache, std::uint64_t op, std::uint64_t result) {
  return cache | (op << 8) | (result << 16);
}

const PerfEventDesc* perf_event_by_name(const std::string& name) {
  static const PerfEventDesc kEvents[] = {
      {"cache-misses", PERF_TYPE_HARDWARE, PERF_COUNT_HW_CACHE_MISSES},
      {"cache-references", PERF_TYPE_HARDWARE, PERF_COUNT_HW_CACHE_REFERENCES},
      {"cycles", PERF_TYPE_HARDWARE, PERF_COUNT_HW_CPU_CYCLES},
      {"instructions", PERF_TYPE_HARDWARE, PERF_COUNT_HW_INSTRUCTIONS},
      {"branch-misses", PERF_TYPE_HARDWARE, PERF_COUNT_HW_BRANCH_MISSES},
      {"branch-instructions", PERF_TYPE_HARDWARE, PERF_COUNT_HW_BRANCH_INSTRUCTIONS},
      {"node-loads", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_NODE, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_ACCESS)},
      {"node-stores", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_NODE, PERF_COUNT_HW_CACHE_OP_WRITE,
                PERF_COUNT_HW_CACHE_RESULT_ACCESS)},
      {"branch-loads", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_BPU, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_ACCESS)},
      {"branch-load-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_BPU, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"LLC-store-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_LL, PERF_COUNT_HW_CACHE_OP_WRITE,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"L1-dcache-stores", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_L1D, PERF_COUNT_HW_CACHE_OP_WRITE,
                PERF_COUNT_HW_CACHE_RESULT_ACCESS)},
      {"L1-dcache-load-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_L1D, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"L1-icache-load-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_L1I, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"iTLB-loads", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_ITLB, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_ACCESS)},
      {"iTLB-load-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_ITLB, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"dTLB-load-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_DTLB, PERF_COUNT_HW_CACHE_OP_READ,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"dTLB-stores", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_DTLB, PERF_COUNT_HW_CACHE_OP_WRITE,
                PERF_COUNT_HW_CACHE_RESULT_ACCESS)},
      {"dTLB-store-misses", PERF_TYPE_HW_CACHE,
       hw_cache(PERF_COUNT_HW_CACHE_DTLB, PERF_COUNT_HW_CACHE_OP_WRITE,
                PERF_COUNT_HW_CACHE_RESULT_MISS)},
      {"task-clock", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_TASK_CLOCK},
      {"cpu-clock", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_CPU_CLOCK},
      {"page-faults", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_PAGE_FAULTS},
      {"minor-faults", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_PAGE_FAULTS_MIN},
      {"major-faults", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_PAGE_FAULTS_MAJ},
      {"context-switches", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_CONTEXT_SWITCHES},
      {"cpu-migrations", PERF_TYPE_SOFTWARE, PERF_COUNT_SW_CPU_MIGRATIONS},
  };
  for (const auto& event : kEvents) {
    if (name == event.name) return &event;
  }
  return nullptr;
}

// Substitutes for hardware events on PMU-less hosts, assigned round-robin.
const char* const kSoftwareFallbacks[] = {"task-clock", "page-faults", "context-switches",
                                          "minor-faults", "cpu-clock", "cpu-migrations"};

long perf_event_open(perf_event_attr* attr, pid_t pid, int cpu, int group_fd,
                     unsigned long flags) {
  return syscall(__NR_perf_event_open, attr, pid, cpu, group_fd, flags);
}

struct ScaledRead {
  std::uint64_t value = 0;
  std::uint64_t time_enabled = 0;
  std::uint64_t time_running = 0;
};

class PerfCounter {
 public:
  PerfCounter(const PerfEventDesc& desc, pid_t pid) {
    perf_event_attr attr{};
    attr.size = sizeof(attr);
    attr.type = desc.type;
    attr.config = desc.config;
    attr.disabled = 0;
    attr.inherit = 1;  // cover the browser's worker threads
    attr.exclude_kernel = 1;
    attr.exclude_hv = 1;
    attr.read_format = PERF_FORMAT_TOTAL_TIME_ENABLED | PERF_FORMAT_TOTAL_TIME_RUNNING;
    fd_ = static_cast<int>(perf_event_open(&attr, pid, -1, -1, PERF_FLAG_FD_CLOEXEC));
    if (fd_ < 0) errno_ = errno;
  }
  ~PerfCounter() {
    if (fd_ >= 0) close(fd_);
  }
  PerfCounter(PerfCounter&& other) noexcept
      : fd_(other.fd_), errno_(other.errno_) {
    other.fd_ = -1;
  }
  PerfCounter& operator=(PerfCounter&& other) noexcept {
    if (this != &other) {
      if (fd_ >= 0) close(fd_);
      fd_ = other.fd_;
      errno_ = other.errno_;
      other.fd_ = -1;
    }
    return *this;
  }
  PerfCounter(const PerfCounter&) = delete;

  bool ok() const { return fd_ >= 0; }
  int error() const { return errno_; }

  /// Cumulative count scaled by enabled/running time (multiplexing).
  double read_scaled() const {
    ScaledRead raw;
    if (read(fd_, &raw, sizeof(raw)) != sizeof(raw)) return 0.0;
    if (raw.time_running == 0) return 0.0;
    return static_cast<double>(raw.value) *
           (static_cast<double>(raw.time_enabled) / static_cast<double>(raw.time_running));
  }

 private:
  int fd_ = -1;
  int errno_ = 0;
};

bool pid_alive(int pid) { return kill(pid, 0) == 0 || errno != ESRCH; }

class LiveTraceHandle : public TraceHandle {
 public:
  LiveTraceHandle(int pid, MonitorConfig config, std::vector<PerfCounter> counters,
                  std::vector<std::string> column_names, FallbackList fallbacks,
                  std::string label)
      : config_(std::move(config)),
        counters_(std::move(counters)),
        fallbacks_(std::move(fallbacks)) {
    trace_.label = std::move(label);
    trace_.events = std::move(column_names);
    trace_.meta.source = TraceSource::live;
    trace_.meta.sampling_rate_hz = config_.sampling_rate_hz;
    trace_.meta.collected_at_unix = std::chrono::duration_cast<std::chrono::seconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count();
    sampler_ = std::thread([this, pid]() { sample_loop(pid); });
  }

  ~LiveTraceHandle() override {
    stop();
    if (sampler_.joinable()) sampler_.join();
  }

  Trace wait() override {
    if (sampler_.joinable()) sampler_.join();
    Trace trace = trace_;
    trace.samples = CountMatrix(rows_.size() / trace.events.size(), trace.events.size());
    trace.samples.data() = rows_;
    if (trace.samples.rows() == 0) {
      throw IoError("monitored process produced no complete sampling interval");
    }
    trace.validate();
    return trace;
  }

  void stop() override { stop_requested_.store(true); }

  const FallbackList& fallbacks() const override { return fallbacks_; }

 private:
  void sample_loop(int pid) {
    using clock = std::chrono::steady_clock;
    const auto interval =
        std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(
            1.0 / config_.sampling_rate_hz));
    const auto target_rows = static_cast<std::size_t>(
        std::llround(config_.sampling_rate_hz * static_cast<double>(config_.max_duration_s)));

    std::vector<double> previous(counters_.size());
    for (std::size_t e = 0; e < counters_.size(); ++e) previous[e] = counters_[e].read_scaled();

    // Absolute deadlines; a slow read shortens the following sleep rather
    // than shifting the whole grid.
    auto deadline = clock::now();
    for (std::size_t row = 0; row < target_rows; ++row) {
      deadline += interval;
      while (!stop_requested_.load()) {
        const auto now = clock::now();
        if (now >= deadline) break;
        std::this_thread::sleep_for(std::min(deadline - now,
                                             std::chrono::duration_cast<clock::duration>(
                                                 std::chrono::milliseconds(50))));
      }
      if (stop_requested_.load()) break;
      for (std::size_t e = 0; e < counters_.size(); ++e) {
        const double current = counters_[e].read_scaled();
        const double delta = std::max(0.0, current - previous[e]);
        previous[e] = current;
        rows_.push_back(static_cast<std::uint64_t>(std::llround(delta)));
      }
      if (!pid_alive(pid)) break;  // graceful truncation on process exit
    }
  }

  MonitorConfig config_;
  std::vector<PerfCounter> counters_;
  FallbackList fallbacks_;
  Trace trace_;
  std::vector<std::uint64_t> rows_;
  std::atomic<bool> stop_requested_{false};
  std::thread sampler_;
};

std::string comm_of(int pid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/comm");
  std::string comm;
  if (in) std::getline(in, comm);
  return comm.empty() ? "pid" + std::to_string(pid) : comm;
}

}  // namespace

std::unique_ptr<TraceHandle> start_monitor(int pid, const MonitorConfig& config) {
  config.validate();
  const int paranoid = check_paranoid_level();
  if (paranoid >= 4) {
    throw InvariantError("perf_event_paranoid is " + std::to_string(paranoid) +
                         "; the kernel forbids HPC access (needs < 4)");
  }
  if (!pid_alive(pid)) throw InvariantError("pid " + std::to_string(pid) + " is not running");

  std::vector<PerfCounter> counters;
  std::vector<std::string> columns;
  FallbackList fallbacks;
  std::size_t next_fallback = 0;
  for (const auto& name : config.events) {
    const PerfEventDesc* desc = perf_event_by_name(name);
    if (desc == nullptr) throw ConfigError("unknown perf event '" + name + "'");
    PerfCounter counter(*desc, pid);
    if (!counter.ok()) {
      // Downgrade to a software counter so collection can proceed; the
      // substitution is reported on the handle.
      const int open_errno = counter.error();
      bool substituted = false;
      for (std::size_t tries = 0; tries < std::size(kSoftwareFallbacks); ++tries) {
        const PerfEventDesc* fallback = perf_event_by_name(kSoftwareFallbacks[next_fallback]);
        next_fallback = (next_fallback + 1) % std::size(kSoftwareFallbacks);
        if (std::find(columns.begin(), columns.end(), fallback->name) != columns.end()) {
          continue;  // keep column names distinct
        }
        PerfCounter candidate(*fallback, pid);
        if (!candidate.ok()) continue;
        counter = std::move(candidate);
        fallbacks.emplace_back(name, fallback->name);
        columns.push_back(fallback->name);
        substituted = true;
        break;
      }
      if (!substituted) {
        throw UnsupportedPlatformError(
            "cannot open counter for event '" + name + "' (" + std::strerror(open_errno) +
            ") and no software fallback is available on this kernel");
      }
    } else {
      columns.push_back(name);
    }
    counters.push_back(std::move(counter));
  }

  return std::make_unique<LiveTraceHandle>(pid, config, std::move(counters), std::move(columns),
                                           std::move(fallbacks), comm_of(pid));
}

#else  // !__linux__

std::unique_ptr<TraceHandle> start_monitor(int, const MonitorConfig&) {
  throw UnsupportedPlatformError("live HPC collection requires Linux perf events");
}

#endif

namespace {

class ReplayTraceHandle : public TraceHandle {
 public:
  explicit ReplayTraceHandle(Trace trace) : trace_(std::move(trace)) {}
  Trace wait() override { return trace_; }
  void stop() override {}
  const FallbackList& fallbacks() const override { return fallbacks_; }

 private:
  Trace trace_;
  FallbackList fallbacks_;
};

}  // namespace

std::unique_ptr<TraceHandle> start_replay(const std::filesystem::path& csv_path,
                                          const std::string& label) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open replay trace " + csv_path.string());
  TraceMeta meta;
  meta.source = TraceSource::replay;
  return std::make_unique<ReplayTraceHandle>(read_trace_csv(in, label, meta));
}

// ---- Overhead benchmark ----

#ifdef __linux__

namespace {

int spawn_shell(const std::string& command) {
  const pid_t pid = fork();
  if (pid < 0) throw IoError(std::string("fork(): ") + std::strerror(errno));
  if (pid == 0) {
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  return pid;
}

double wait_victim(int pid, std::chrono::steady_clock::time_point started,
                   const std::string& command) {
  int status = 0;
  if (waitpid(pid, &status, 0) < 0) {
    throw IoError(std::string("waitpid(): ") + std::strerror(errno));
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw InvariantError("victim command failed: " + command);
  }
  return elapsed;
}

}  // namespace

OverheadReport run_overhead_bench(const std::string& victim_command,
                                  const std::vector<double>& rates_hz, std::size_t repetitions,
                                  const std::vector<std::string>& events) {
  if (repetitions < 3) throw ConfigError("overhead benchmark needs >= 3 repetitions");
  for (double rate : rates_hz) {
    if (!(rate > 0) || rate > 1e6) throw ConfigError("sampling rates must lie in (0, 1e6]");
  }

  OverheadReport report;
  report.repetitions = repetitions;
  report.rates_hz = rates_hz;

  double baseline_total = 0.0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto started = std::chrono::steady_clock::now();
    const int pid = spawn_shell(victim_command);
    baseline_total += wait_victim(pid, started, victim_command);
  }
  report.baseline_runtime_s = baseline_total / static_cast<double>(repetitions);

  for (double rate : rates_hz) {
    MonitorConfig config;
    config.events = events;
    config.sampling_rate_hz = rate;
    config.max_duration_s = 24 * 3600;  // the victim decides the duration
    double total = 0.0;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto started = std::chrono::steady_clock::now();
      const int pid = spawn_shell(victim_command);
      auto handle = start_monitor(pid, config);
      total += wait_victim(pid, started, victim_command);
      handle->stop();  // handle teardown joins the sampler
    }
    const double mean = total / static_cast<double>(repetitions);
    report.victim_runtime_s.push_back(mean);
    report.overhead_pct.push_back((mean / report.baseline_runtime_s - 1.0) * 100.0);
  }
  return report;
}

#else

OverheadReport run_overhead_bench(const std::string&, const std::vector<double>&, std::size_t,
                                  const std::vector<std::string>&) {
  throw UnsupportedPlatformError("the overhead benchmark requires Linux perf events");
}

#endif

}  // namespace leakedweb
