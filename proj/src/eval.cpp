#include "leakedweb/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "leakedweb/features.hpp"

namespace leakedweb {

using json = nlohmann::json;

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (std::uint64_t v : counts.data()) sum += v;
  return sum;
}

std::uint64_t ConfusionMatrix::diagonal() const {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < counts.rows(); ++i) sum += counts(i, i);
  return sum;
}

EvalReport report_from_confusion(ConfusionMatrix confusion) {
  const std::size_t n_classes = confusion.classes.size();
  if (confusion.counts.rows() != n_classes || confusion.counts.cols() != n_classes) {
    throw InvariantError("confusion matrix must be square over its class list");
  }
  EvalReport report;
  const std::uint64_t total = confusion.total();
  if (total == 0) throw InvariantError("cannot evaluate an empty test set");
  report.accuracy = static_cast<double>(confusion.diagonal()) / static_cast<double>(total);

  double macro_sum = 0.0;
  std::size_t macro_n = 0;
  double weighted_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::uint64_t row_sum = 0, col_sum = 0;
    for (std::size_t j = 0; j < n_classes; ++j) {
      row_sum += confusion.counts(c, j);
      col_sum += confusion.counts(j, c);
    }
    ClassMetrics metrics;
    metrics.label = confusion.classes[c];
    metrics.support = row_sum;
    const std::uint64_t hit = confusion.counts(c, c);
    metrics.precision = col_sum > 0 ? static_cast<double>(hit) / static_cast<double>(col_sum) : 0.0;
    metrics.recall = row_sum > 0 ? static_cast<double>(hit) / static_cast<double>(row_sum) : 0.0;
    const double pr = metrics.precision + metrics.recall;
    metrics.f_measure = pr > 0.0 ? 2.0 * metrics.precision * metrics.recall / pr : 0.0;
    if (row_sum > 0) {
      macro_sum += metrics.f_measure;
      ++macro_n;
      weighted_sum += static_cast<double>(row_sum) * metrics.f_measure;
    }
    report.per_class.push_back(std::move(metrics));
  }
  report.macro_f = macro_n > 0 ? macro_sum / static_cast<double>(macro_n) : 0.0;
  report.weighted_f = weighted_sum / static_cast<double>(total);
  report.confusion = std::move(confusion);
  return report;
}

EvalReport evaluate(const TrainedModel& model, const Dataset& test) {
  test.validate();
  if (test.traces.empty()) throw InvariantError("cannot evaluate an empty test set");
  std::unordered_set<std::string_view> known(model.class_list.begin(), model.class_list.end());
  for (const auto& trace : test.traces) {
    if (known.find(trace.label) == known.end()) {
      throw InvariantError("test label '" + trace.label + "' unknown to the model");
    }
  }

  // Predictions are pure; farm test traces across cores and count afterwards.
  std::vector<std::size_t> predicted(test.traces.size());
  const std::size_t workers =
      std::min(test.traces.size(), static_cast<std::size_t>(std::max(1u, std::thread::hardware_concurrency())));
  auto run = [&](std::size_t worker) {
    for (std::size_t i = worker; i < test.traces.size(); i += workers) {
      const auto result = predict(model, test.traces[i]);
      predicted[i] = static_cast<std::size_t>(
          std::find(model.class_list.begin(), model.class_list.end(), result.label) -
          model.class_list.begin());
    }
  };
  if (workers <= 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& th : pool) th.join();
  }

  ConfusionMatrix confusion;
  confusion.classes = model.class_list;
  confusion.counts = Matrix<std::uint64_t>(model.class_list.size(), model.class_list.size(), 0);
  for (std::size_t i = 0; i < test.traces.size(); ++i) {
    std::size_t actual = 0;
    for (; actual < model.class_list.size(); ++actual) {
      if (model.class_list[actual] == test.traces[i].label) break;
    }
    confusion.counts(actual, predicted[i])++;
  }
  return report_from_confusion(std::move(confusion));
}

// ---- Open world ----

Dataset open_world_prepare(const Dataset& closed, const Dataset& extra_non_sensitive) {
  closed.validate();
  if (extra_non_sensitive.traces.empty()) {
    throw InvariantError("open-world preparation needs at least one non-sensitive trace");
  }
  std::unordered_set<std::string_view> sensitive(closed.class_list.begin(),
                                                 closed.class_list.end());

  Dataset merged;
  merged.world = World::open;
  merged.class_list = closed.class_list;
  if (std::find(merged.class_list.begin(), merged.class_list.end(), kNonSensitiveLabel) ==
      merged.class_list.end()) {
    merged.class_list.push_back(kNonSensitiveLabel);
  }
  merged.traces = closed.traces;

  std::set<std::pair<std::vector<std::string>, std::vector<std::uint64_t>>> seen;
  std::size_t duplicates = 0;
  for (const auto& trace : extra_non_sensitive.traces) {
    if (trace.label != kNonSensitiveLabel && sensitive.count(trace.label)) {
      throw InvariantError("non-sensitive trace label '" + trace.label +
                           "' collides with a sensitive site");
    }
    if (!seen.insert({trace.events, trace.samples.data()}).second) {
      ++duplicates;
      continue;
    }
    Trace relabeled = trace;
    relabeled.label = kNonSensitiveLabel;
    merged.traces.push_back(std::move(relabeled));
  }
  if (duplicates > 0) {
    std::fprintf(stderr, "open_world_prepare: dropped %zu duplicate non-sensitive traces\n",
                 duplicates);
  }
  merged.validate();
  return merged;
}

// ---- Sweeps ----

namespace {

struct GridPoint {
  ModelFamily family;
  std::size_t n_train_traces;
  std::size_t n_features;
  std::size_t samples;
  std::size_t repetition;

  auto operator<=>(const GridPoint&) const = default;
};

std::map<std::string, std::string> coords_of(const GridPoint& point, World world) {
  return {{"family", std::string(to_string(point.family))},
          {"world", std::string(to_string(world))},
          {"n_train_traces", std::to_string(point.n_train_traces)},
          {"n_features", std::to_string(point.n_features)},
          {"samples_per_trace", std::to_string(point.samples)},
          {"repetition", std::to_string(point.repetition)}};
}

}  // namespace

SweepOutcome run_sweep(const SweepSource& source, const SweepSpec& spec) {
  if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (spec.families.empty()) throw ConfigError("sweep needs at least one family");
  if (spec.train_traces_grid.empty() || spec.feature_count_grid.empty() ||
      spec.samples_grid.empty()) {
    throw ConfigError("sweep grids must be non-empty");
  }

  Dataset base = std::holds_alternative<GeneratorConfig>(source)
                     ? generate(std::get<GeneratorConfig>(source))
                     : std::get<Dataset>(source);
  base.validate();

  SweepOutcome outcome;
  for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
    const std::uint64_t seed = spec.base_seed + rep;  // counter-derived rep seeds
    SplitSpec split_spec;
    split_spec.train_fraction = spec.train_fraction;
    split_spec.seed = seed;
    auto [train_pool, test_pool] = split(base, split_spec);

    std::size_t min_train_per_class = train_pool.traces.size();
    {
      std::vector<std::size_t> counts(train_pool.class_list.size(), 0);
      for (const auto& trace : train_pool.traces) {
        counts[train_pool.class_index(trace.label)]++;
      }
      for (std::size_t c : counts) min_train_per_class = std::min(min_train_per_class, c);
    }
    const std::size_t n_events = base.events().size();
    const std::size_t trace_len = base.traces.front().n_samples();

    // One-factor-at-a-time around the baseline operating point, deduplicated.
    std::set<GridPoint> points;
    for (ModelFamily family : spec.families) {
      for (std::size_t n : spec.train_traces_grid) {
        points.insert({family, n, spec.baseline_features, spec.baseline_samples, rep});
      }
      for (std::size_t k : spec.feature_count_grid) {
        points.insert({family, spec.baseline_train_traces, k, spec.baseline_samples, rep});
      }
      for (std::size_t m : spec.samples_grid) {
        points.insert({family, spec.baseline_train_traces, spec.baseline_features, m, rep});
      }
    }

    for (const GridPoint& point : points) {
      if (point.n_train_traces > min_train_per_class) {
        outcome.warnings.push_back("skipped n_train_traces=" +
                                   std::to_string(point.n_train_traces) + ": only " +
                                   std::to_string(min_train_per_class) + " per class available");
        continue;
      }
      if (point.n_features > n_events) {
        outcome.warnings.push_back("skipped n_features=" + std::to_string(point.n_features) +
                                   ": dataset has " + std::to_string(n_events) + " events");
        continue;
      }
      if (point.samples > trace_len) {
        outcome.warnings.push_back("skipped samples_per_trace=" + std::to_string(point.samples) +
                                   ": traces hold " + std::to_string(trace_len) + " samples");
        continue;
      }

      Dataset train = subsample_per_class(train_pool, point.n_train_traces, seed);
      // Leakage guard: ranking sees only training traces.
      const auto ranking = rank_features(train);
      const auto selected = ranking.top_k(point.n_features);

      Dataset train_view = truncate_samples(project_events(train, selected), point.samples);
      Dataset test_view = truncate_samples(project_events(test_pool, selected), point.samples);

      const TrainedModel model = train_family(point.family, train_view, seed);
      EvalReport report = evaluate(model, test_view);
      report.sweep_coords = coords_of(point, base.world);
      outcome.reports.push_back(std::move(report));
    }
  }
  return outcome;
}

// ---- Report emission ----

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  if (text == "markdown" || text == "markdown-table" || text == "md") {
    return ReportFormat::markdown_table;
  }
  throw ConfigError("unknown report format '" + std::string(text) + "'");
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

const char* const kColumns[] = {"family",       "world",      "n_train_traces",
                                "n_features",   "samples_per_trace", "repetition",
                                "accuracy",     "macro_f",    "weighted_f"};

std::vector<std::string> report_row(const EvalReport& report) {
  auto coord = [&](const char* key) {
    auto it = report.sweep_coords.find(key);
    return it == report.sweep_coords.end() ? std::string("-") : it->second;
  };
  return {coord("family"),
          coord("world"),
          coord("n_train_traces"),
          coord("n_features"),
          coord("samples_per_trace"),
          coord("repetition"),
          fixed4(report.accuracy),
          fixed4(report.macro_f),
          fixed4(report.weighted_f)};
}

json report_to_json(const EvalReport& report) {
  json per_class = json::array();
  for (const auto& metrics : report.per_class) {
    per_class.push_back({{"label", metrics.label},
                         {"precision", metrics.precision},
                         {"recall", metrics.recall},
                         {"f_measure", metrics.f_measure},
                         {"support", metrics.support}});
  }
  json counts = json::array();
  for (std::size_t r = 0; r < report.confusion.counts.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < report.confusion.counts.cols(); ++c) {
      row.push_back(report.confusion.counts(r, c));
    }
    counts.push_back(row);
  }
  return {{"accuracy", report.accuracy},
          {"macro_f", report.macro_f},
          {"weighted_f", report.weighted_f},
          {"sweep_coords", report.sweep_coords},
          {"per_class", per_class},
          {"confusion", {{"classes", report.confusion.classes}, {"counts", counts}}}};
}

EvalReport report_from_json(const json& doc) {
  EvalReport report;
  report.accuracy = doc.at("accuracy").get<double>();
  report.macro_f = doc.at("macro_f").get<double>();
  report.weighted_f = doc.at("weighted_f").get<double>();
  report.sweep_coords = doc.at("sweep_coords").get<std::map<std::string, std::string>>();
  for (const auto& item : doc.at("per_class")) {
    ClassMetrics metrics;
    metrics.label = item.at("label").get<std::string>();
    metrics.precision = item.at("precision").get<double>();
    metrics.recall = item.at("recall").get<double>();
    metrics.f_measure = item.at("f_measure").get<double>();
    metrics.support = item.at("support").get<std::uint64_t>();
    report.per_class.push_back(std::move(metrics));
  }
  report.confusion.classes = doc.at("confusion").at("classes").get<std::vector<std::string>>();
  const auto& counts = doc.at("confusion").at("counts");
  report.confusion.counts =
      Matrix<std::uint64_t>(report.confusion.classes.size(), report.confusion.classes.size(), 0);
  for (std::size_t r = 0; r < counts.size(); ++r) {
    for (std::size_t c = 0; c < counts[r].size(); ++c) {
      report.confusion.counts(r, c) = counts[r][c].get<std::uint64_t>();
    }
  }
  return report;
}

}  // namespace

void emit_report(const std::vector<EvalReport>& reports, ReportFormat format, std::ostream& out) {
  if (reports.empty()) throw InvariantError("no reports to emit");
  switch (format) {
    case ReportFormat::json: {
      json arr = json::array();
      for (const auto& report : reports) arr.push_back(report_to_json(report));
      out << arr.dump(2) << '\n';
      break;
    }
    case ReportFormat::csv: {
      for (std::size_t i = 0; i < std::size(kColumns); ++i) {
        out << (i ? "," : "") << kColumns[i];
      }
      out << '\n';
      for (const auto& report : reports) {
        const auto row = report_row(report);
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
      }
      break;
    }
    case ReportFormat::markdown_table: {
      out << '|';
      for (const auto* column : kColumns) out << ' ' << column << " |";
      out << "\n|";
      for (std::size_t i = 0; i < std::size(kColumns); ++i) out << "---|";
      out << '\n';
      for (const auto& report : reports) {
        out << '|';
        for (const auto& cell : report_row(report)) out << ' ' << cell << " |";
        out << '\n';
      }
      break;
    }
  }
  if (!out) throw IoError("report emission failed");
}

std::string report_string(const std::vector<EvalReport>& reports, ReportFormat format) {
  std::ostringstream out;
  emit_report(reports, format, out);
  return out.str();
}

std::vector<EvalReport> parse_report_json(std::string_view text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad report JSON: ") + e.what());
  }
  std::vector<EvalReport> reports;
  for (const auto& item : arr) reports.push_back(report_from_json(item));
  return reports;
}

}  // namespace leakedweb
