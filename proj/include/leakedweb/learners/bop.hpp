#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "leakedweb/core.hpp"

namespace leakedweb {

struct BopParams {
  std::size_t window = 24;
  std::size_t paa_segments = 6;
  std::size_t alphabet = 4;  // 2..10
};

/// Standard-normal equiprobable breakpoints for an alphabet size in 2..10.
std::span<const double> sax_breakpoints(std::size_t alphabet);

/// SAX word of one window: z-normalize, PAA-reduce to paa_segments means,
/// symbolize each mean as the count of breakpoints <= value ('a' + index).
/// A near-constant window degrades to the all-middle-symbol word.
std::string sax_word(std::span<const double> window, std::size_t paa_segments,
                     std::size_t alphabet);

/// Sliding-window word histogram with stride 1 and numerosity reduction
/// (runs of identical consecutive words count once).
std::map<std::string, std::uint32_t> bop_transform(std::span<const double> sequence,
                                                   const BopParams& params);

/// 1-NN classifier over per-trace word histograms; multivariate traces
/// contribute event-tagged words ("e<idx>:<word>") to one shared vocabulary.
struct BopModel {
  BopParams params;  // effective (window may have been shrunk)
  std::size_t n_classes = 0;
  std::size_t n_events = 0;
  std::size_t samples_per_trace = 0;
  std::vector<std::size_t> labels;
  std::vector<std::map<std::string, std::uint32_t>> histograms;
  std::vector<double> class_priors;

  std::map<std::string, std::uint32_t> transform(
      const std::vector<std::vector<double>>& channels) const;

  /// One-hot on the nearest histogram (squared Euclidean over the union
  /// vocabulary); empty vocabulary overlap falls back to the class priors.
  std::vector<double> scores(const std::vector<std::vector<double>>& channels) const;
};

BopModel fit_bop(const std::vector<std::vector<std::vector<double>>>& channels,
                 const std::vector<std::size_t>& labels, std::size_t n_classes,
                 const BopParams& params);

}  // namespace leakedweb
