#pragma once

#include <span>
#include <string>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

/// In-place z-normalization; a constant channel becomes all zeros.
void znormalize(std::span<double> values);

/// Per-event channel of a trace, padded by repeating the final sample (or
/// truncated) to target_len rows. Throws InvariantError naming the column
/// when the trace lacks it.
std::vector<double> trace_channel(const Trace& trace, const std::string& event,
                                  std::size_t target_len);

/// Event-major flattened vector [e0 s0..sT-1, e1 s0..sT-1, ...]; raw counts.
/// Tree learners consume this directly.
std::vector<double> flatten_trace(const Trace& trace, const std::vector<std::string>& events,
                                  std::size_t target_len);

/// Per-event channels z-normalized independently; the representation the
/// time-series learners consume.
std::vector<std::vector<double>> znormed_channels(const Trace& trace,
                                                  const std::vector<std::string>& events,
                                                  std::size_t target_len);

/// Raw flattened design matrix for a dataset (rows follow dataset order).
struct DesignMatrix {
  Matrix<double> rows;
  std::vector<std::size_t> labels;  // indices into class_list
  std::vector<std::string> class_list;
};

DesignMatrix build_design_matrix(const Dataset& dataset, const std::vector<std::string>& events,
                                 std::size_t target_len);

}  // namespace leakedweb
