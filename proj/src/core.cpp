#include "leakedweb/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "leakedweb/rng.hpp"

namespace leakedweb {

using json = nlohmann::json;

const std::vector<EventSpec>& event_table() {
  static const std::vector<EventSpec> table = {
      {"cache-misses", 1},
      {"node-loads", 2},
      {"branch-misses", 3},
      {"branch-load-misses", 4},
      {"LLC-store-misses", 5},
      {"branch-loads", 6},
      {"L1-dcache-stores", 7},
      {"L1-icache-load-misses", 8},
      {"branch-instructions", 9},
      {"iTLB-loads", 10},
      {"iTLB-load-misses", 11},
      {"dTLB-store-misses", 12},
      {"dTLB-load-misses", 13},
      {"dTLB-stores", 14},
      {"node-stores", 15},
      {"L1-dcache-load-misses", 16},
  };
  return table;
}

std::optional<int> event_table_rank(std::string_view name) {
  for (const auto& spec : event_table()) {
    if (spec.name == name) return spec.paper_rank;
  }
  return std::nullopt;
}

std::vector<std::string> default_event_names(std::size_t top_n) {
  const auto& table = event_table();
  top_n = std::min(top_n, table.size());
  std::vector<std::string> names;
  names.reserve(top_n);
  for (std::size_t i = 0; i < top_n; ++i) names.push_back(table[i].name);
  return names;
}

std::string_view to_string(TraceSource source) {
  switch (source) {
    case TraceSource::live: return "live";
    case TraceSource::synthetic: return "synthetic";
    case TraceSource::replay: return "replay";
  }
  return "synthetic";
}

TraceSource trace_source_from_string(std::string_view text) {
  if (text == "live") return TraceSource::live;
  if (text == "synthetic") return TraceSource::synthetic;
  if (text == "replay") return TraceSource::replay;
  throw ParseError("unknown trace source '" + std::string(text) + "'");
}

std::string_view to_string(World world) {
  return world == World::closed ? "closed" : "open";
}

void Trace::validate() const {
  if (label.empty()) throw InvariantError("trace label must be non-empty");
  if (events.empty()) throw InvariantError("trace must declare at least one event column");
  if (samples.rows() < 1) throw InvariantError("trace must contain at least one sample row");
  if (samples.cols() != events.size()) {
    throw InvariantError("trace column count " + std::to_string(samples.cols()) +
                         " does not match event list length " + std::to_string(events.size()));
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& name : events) {
    if (!seen.insert(name).second) throw InvariantError("duplicate event column '" + name + "'");
  }
  if (meta.sampling_rate_hz <= 0) throw InvariantError("sampling_rate_hz must be positive");
}

Dataset Dataset::from_traces(std::vector<Trace> traces, World world) {
  Dataset ds;
  ds.world = world;
  ds.traces = std::move(traces);
  for (const auto& trace : ds.traces) {
    if (std::find(ds.class_list.begin(), ds.class_list.end(), trace.label) == ds.class_list.end()) {
      ds.class_list.push_back(trace.label);
    }
  }
  ds.validate();
  return ds;
}

void Dataset::validate() const {
  if (traces.empty()) throw InvariantError("dataset contains no traces");
  std::unordered_set<std::string_view> classes(class_list.begin(), class_list.end());
  if (classes.size() != class_list.size()) throw InvariantError("class_list has duplicates");
  if (world == World::open && classes.find(kNonSensitiveLabel) == classes.end()) {
    throw InvariantError("open-world dataset must contain the 'non-sensitive' class");
  }
  const auto& columns = traces.front().events;
  for (const auto& trace : traces) {
    trace.validate();
    if (classes.find(trace.label) == classes.end()) {
      throw InvariantError("trace label '" + trace.label + "' missing from class_list");
    }
    if (trace.events != columns) {
      throw InvariantError("traces disagree on event columns (expected '" + columns.front() +
                           "...', trace '" + trace.label + "' differs)");
    }
  }
}

const std::vector<std::string>& Dataset::events() const {
  if (traces.empty()) throw InvariantError("dataset contains no traces");
  return traces.front().events;
}

std::size_t Dataset::class_index(std::string_view label) const {
  for (std::size_t i = 0; i < class_list.size(); ++i) {
    if (class_list[i] == label) return i;
  }
  throw InvariantError("label '" + std::string(label) + "' not in class_list");
}

// ---- CSV ----

std::size_t write_trace_csv(const Trace& trace, std::ostream& sink) {
  trace.validate();
  std::string out = trace_csv_string(trace);
  sink.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!sink) {
    const auto position = sink.tellp();
    const long long written = position < 0 ? 0 : static_cast<long long>(position);
    throw IoError("trace CSV write failed after " + std::to_string(written) + " bytes");
  }
  return out.size();
}

std::string trace_csv_string(const Trace& trace) {
  trace.validate();
  std::string out = "t";
  for (const auto& name : trace.events) {
    out += ',';
    out += name;
  }
  out += '\n';
  char buf[24];
  for (std::size_t r = 0; r < trace.samples.rows(); ++r) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), r);
    out.append(buf, p);
    for (std::size_t c = 0; c < trace.samples.cols(); ++c) {
      out += ',';
      auto [q, ec2] = std::to_chars(buf, buf + sizeof(buf), trace.samples(r, c));
      out.append(buf, q);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::uint64_t parse_counter(std::string_view field, long line_no) {
  if (!field.empty() && field.front() == '-') {
    throw InvariantError("negative counter value '" + std::string(field) + "' at line " +
                         std::to_string(line_no));
  }
  std::uint64_t value = 0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || p != field.data() + field.size()) {
    throw ParseError("malformed counter field '" + std::string(field) + "'", line_no);
  }
  return value;
}

}  // namespace

Trace parse_trace_csv(std::string_view csv, std::string label, const TraceMeta& meta) {
  std::size_t pos = 0;
  long line_no = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= csv.size()) return std::nullopt;
    std::size_t nl = csv.find('\n', pos);
    std::string_view line = nl == std::string_view::npos ? csv.substr(pos)
                                                         : csv.substr(pos, nl - pos);
    pos = nl == std::string_view::npos ? csv.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    return line;
  };

  auto header = next_line();
  if (!header) throw ParseError("empty trace CSV", 1);
  auto header_fields = split_fields(*header);
  if (header_fields.empty() || header_fields[0] != "t") {
    throw ParseError("trace CSV header must start with 't'", 1);
  }
  if (header_fields.size() < 2) throw ParseError("trace CSV header declares no events", 1);

  Trace trace;
  trace.label = std::move(label);
  trace.meta = meta;
  for (std::size_t i = 1; i < header_fields.size(); ++i) {
    trace.events.emplace_back(header_fields[i]);
  }

  std::vector<std::uint64_t> values;
  std::size_t n_rows = 0;
  while (auto line = next_line()) {
    if (line->empty()) continue;  // tolerate trailing blank line
    auto fields = split_fields(*line);
    if (fields.size() != header_fields.size()) {
      throw ParseError("expected " + std::to_string(header_fields.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    std::uint64_t t = parse_counter(fields[0], line_no);
    if (t != n_rows) {
      throw ParseError("second index " + std::to_string(t) + " out of order (expected " +
                           std::to_string(n_rows) + ")",
                       line_no);
    }
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_counter(fields[i], line_no));
    ++n_rows;
  }
  if (n_rows == 0) throw InvariantError("trace CSV contains no sample rows");

  trace.samples = CountMatrix(n_rows, trace.events.size());
  trace.samples.data() = std::move(values);
  trace.validate();
  return trace;
}

Trace read_trace_csv(std::istream& source, std::string label, const TraceMeta& meta) {
  std::ostringstream buffer;
  buffer << source.rdbuf();
  return parse_trace_csv(buffer.str(), std::move(label), meta);
}

// ---- Dataset persistence ----

namespace {

std::string sanitize_label(std::string_view label) {
  std::string out;
  out.reserve(label.size());
  for (char ch : label) {
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.') ? ch : '_';
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  json manifest = json::array();
  std::unordered_map<std::string, std::size_t> per_label_count;
  for (const auto& trace : dataset.traces) {
    std::size_t idx = per_label_count[trace.label]++;
    std::string file = sanitize_label(trace.label) + "_" + std::to_string(idx) + ".csv";
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw IoError("cannot open " + (dir / file).string() + " for writing");
    write_trace_csv(trace, out);
    manifest.push_back({{"label", trace.label},
                        {"path", file},
                        {"source", std::string(to_string(trace.meta.source))},
                        {"sampling_rate_hz", trace.meta.sampling_rate_hz}});
  }
  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw IoError("cannot write manifest.json in " + dir.string());
  mf << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::filesystem::path path = manifest_path;
  if (std::filesystem::is_directory(path)) path /= "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad manifest JSON: ") + e.what());
  }
  if (!manifest.is_array() || manifest.empty()) throw ParseError("manifest must be a non-empty array");

  const auto base = path.parent_path();
  std::vector<Trace> traces;
  bool has_non_sensitive = false;
  for (const auto& entry : manifest) {
    TraceMeta meta;
    meta.source = trace_source_from_string(entry.at("source").get<std::string>());
    meta.sampling_rate_hz = entry.at("sampling_rate_hz").get<double>();
    std::string label = entry.at("label").get<std::string>();
    has_non_sensitive = has_non_sensitive || label == kNonSensitiveLabel;
    std::ifstream csv(base / entry.at("path").get<std::string>(), std::ios::binary);
    if (!csv) throw IoError("cannot open trace file " + (base / entry.at("path").get<std::string>()).string());
    traces.push_back(read_trace_csv(csv, std::move(label), meta));
  }
  return Dataset::from_traces(std::move(traces), has_non_sensitive ? World::open : World::closed);
}

// ---- Split ----

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
  dataset.validate();
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0) {
    throw ConfigError("train_fraction must lie in (0,1)");
  }

  std::vector<std::vector<std::size_t>> by_class(dataset.class_list.size());
  for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
    by_class[dataset.class_index(dataset.traces[i].label)].push_back(i);
  }

  std::vector<bool> in_train(dataset.traces.size(), false);
  if (spec.stratified) {
    // Floor per class, then hand the rounding remainder to classes in
    // class_list order; counts are seed-independent.
    std::vector<std::size_t> base(by_class.size());
    double frac_sum = 0.0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (by_class[c].size() < 2) {
        throw InvariantError("stratified split needs >= 2 traces per class; class '" +
                             dataset.class_list[c] + "' has " + std::to_string(by_class[c].size()));
      }
      double target = spec.train_fraction * static_cast<double>(by_class[c].size());
      base[c] = static_cast<std::size_t>(std::floor(target));
      frac_sum += target - std::floor(target);
    }
    std::size_t remainder = static_cast<std::size_t>(std::llround(frac_sum));
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      std::size_t take = base[c] + (c < remainder ? 1 : 0);
      take = std::clamp<std::size_t>(take, 1, by_class[c].size() - 1);
      auto indices = by_class[c];
      Rng rng(derive_seed(spec.seed, {1, c}));
      rng.shuffle(indices);
      for (std::size_t i = 0; i < take; ++i) in_train[indices[i]] = true;
    }
  } else {
    std::vector<std::size_t> indices(dataset.traces.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    Rng rng(derive_seed(spec.seed, {1, 0}));
    rng.shuffle(indices);
    auto take = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(indices.size())));
    take = std::clamp<std::size_t>(take, 1, indices.size() - 1);
    for (std::size_t i = 0; i < take; ++i) in_train[indices[i]] = true;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      bool any = false;
      for (std::size_t idx : by_class[c]) any = any || in_train[idx];
      if (!any) {
        throw InvariantError("class '" + dataset.class_list[c] +
                             "' received no training traces; use a stratified split");
      }
    }
  }

  Dataset train, test;
  train.world = test.world = dataset.world;
  train.class_list = test.class_list = dataset.class_list;
  for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
    (in_train[i] ? train : test).traces.push_back(dataset.traces[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---- Shaping helpers ----

Dataset project_events(const Dataset& dataset, const std::vector<std::string>& events) {
  dataset.validate();
  if (events.empty()) throw ConfigError("event projection list is empty");
  const auto& columns = dataset.events();
  std::vector<std::size_t> indices;
  for (const auto& name : events) {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InvariantError("dataset has no event column '" + name + "'");
    indices.push_back(static_cast<std::size_t>(it - columns.begin()));
  }
  Dataset out;
  out.world = dataset.world;
  out.class_list = dataset.class_list;
  out.traces.reserve(dataset.traces.size());
  for (const auto& trace : dataset.traces) {
    Trace projected;
    projected.label = trace.label;
    projected.meta = trace.meta;
    projected.events = events;
    projected.samples = CountMatrix(trace.samples.rows(), indices.size());
    for (std::size_t r = 0; r < trace.samples.rows(); ++r) {
      for (std::size_t c = 0; c < indices.size(); ++c) {
        projected.samples(r, c) = trace.samples(r, indices[c]);
      }
    }
    out.traces.push_back(std::move(projected));
  }
  return out;
}

Dataset truncate_samples(const Dataset& dataset, std::size_t n) {
  dataset.validate();
  if (n < 1) throw ConfigError("cannot truncate traces to zero samples");
  Dataset out;
  out.world = dataset.world;
  out.class_list = dataset.class_list;
  out.traces.reserve(dataset.traces.size());
  for (const auto& trace : dataset.traces) {
    std::size_t keep = std::min(n, trace.samples.rows());
    Trace cut;
    cut.label = trace.label;
    cut.meta = trace.meta;
    cut.events = trace.events;
    cut.samples = CountMatrix(keep, trace.samples.cols());
    for (std::size_t r = 0; r < keep; ++r) {
      for (std::size_t c = 0; c < trace.samples.cols(); ++c) cut.samples(r, c) = trace.samples(r, c);
    }
    out.traces.push_back(std::move(cut));
  }
  return out;
}

Dataset subsample_per_class(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  dataset.validate();
  if (n < 1) throw ConfigError("per-class subsample size must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(dataset.class_list.size());
  for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
    by_class[dataset.class_index(dataset.traces[i].label)].push_back(i);
  }
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto indices = by_class[c];
    Rng rng(derive_seed(seed, {2, c}));
    rng.shuffle(indices);
    std::size_t take = std::min(n, indices.size());
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(indices[i]);
  }
  std::sort(chosen.begin(), chosen.end());
  Dataset out;
  out.world = dataset.world;
  out.class_list = dataset.class_list;
  for (std::size_t idx : chosen) out.traces.push_back(dataset.traces[idx]);
  return out;
}

}  // namespace leakedweb
