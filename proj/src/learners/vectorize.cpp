#include "leakedweb/learners/vectorize.hpp"

#include <algorithm>
#include <cmath>

namespace leakedweb {

void znormalize(std::span<double> values) {
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  if (var < 1e-18) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  const double inv_sd = 1.0 / std::sqrt(var);
  for (double& v : values) v = (v - mean) * inv_sd;
}

std::vector<double> trace_channel(const Trace& trace, const std::string& event,
                                  std::size_t target_len) {
  auto it = std::find(trace.events.begin(), trace.events.end(), event);
  if (it == trace.events.end()) {
    throw InvariantError("trace is missing required event column '" + event + "'");
  }
  const auto col = static_cast<std::size_t>(it - trace.events.begin());
  std::vector<double> channel(target_len);
  const std::size_t rows = trace.samples.rows();
  for (std::size_t t = 0; t < target_len; ++t) {
    const std::size_t r = std::min(t, rows - 1);  // repeat final sample when short
    channel[t] = static_cast<double>(trace.samples(r, col));
  }
  return channel;
}

std::vector<double> flatten_trace(const Trace& trace, const std::vector<std::string>& events,
                                  std::size_t target_len) {
  std::vector<double> out;
  out.reserve(events.size() * target_len);
  for (const auto& event : events) {
    auto channel = trace_channel(trace, event, target_len);
    out.insert(out.end(), channel.begin(), channel.end());
  }
  return out;
}

std::vector<std::vector<double>> znormed_channels(const Trace& trace,
                                                  const std::vector<std::string>& events,
                                                  std::size_t target_len) {
  std::vector<std::vector<double>> channels;
  channels.reserve(events.size());
  for (const auto& event : events) {
    auto channel = trace_channel(trace, event, target_len);
    znormalize(channel);
    channels.push_back(std::move(channel));
  }
  return channels;
}

DesignMatrix build_design_matrix(const Dataset& dataset, const std::vector<std::string>& events,
                                 std::size_t target_len) {
  dataset.validate();
  DesignMatrix design;
  design.class_list = dataset.class_list;
  design.rows = Matrix<double>(dataset.traces.size(), events.size() * target_len);
  design.labels.reserve(dataset.traces.size());
  for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
    auto flat = flatten_trace(dataset.traces[i], events, target_len);
    for (std::size_t j = 0; j < flat.size(); ++j) design.rows(i, j) = flat[j];
    design.labels.push_back(dataset.class_index(dataset.traces[i].label));
  }
  return design;
}

}  // namespace leakedweb
