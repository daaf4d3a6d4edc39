#include "leakedweb/learners/bop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "leakedweb/learners/vectorize.hpp"

namespace leakedweb {

namespace {

// Phi^-1(i/a) for i = 1..a-1, a = 2..10.
constexpr double kBreakpoints2[] = {0.0};
constexpr double kBreakpoints3[] = {-0.4307272992954576, 0.4307272992954576};
constexpr double kBreakpoints4[] = {-0.6744897501960817, 0.0, 0.6744897501960817};
constexpr double kBreakpoints5[] = {-0.8416212335729142, -0.2533471031357997, 0.2533471031357997,
                                    0.8416212335729142};
constexpr double kBreakpoints6[] = {-0.967421566101701, -0.4307272992954576, 0.0,
                                    0.4307272992954576, 0.967421566101701};
constexpr double kBreakpoints7[] = {-1.0675705238784183, -0.5659488219932862,
                                    -0.18001236979270438, 0.18001236979270438,
                                    0.5659488219932862,  1.0675705238784183};
constexpr double kBreakpoints8[] = {-1.1503493803760079, -0.6744897501960817,
                                    -0.3186393639643751, 0.0,
                                    0.3186393639643751,  0.6744897501960817,
                                    1.1503493803760079};
constexpr double kBreakpoints9[] = {-1.2206403488327353, -0.7647096737863868,
                                    -0.4307272992954576, -0.1397102988915995,
                                    0.1397102988915995,  0.4307272992954576,
                                    0.7647096737863868,  1.2206403488327353};
constexpr double kBreakpoints10[] = {-1.2815515655446004, -0.8416212335729142,
                                     -0.5244005127080407, -0.2533471031357997,
                                     0.0,
                                     0.2533471031357997,  0.5244005127080407,
                                     0.8416212335729142,  1.2815515655446004};

}  // namespace

std::span<const double> sax_breakpoints(std::size_t alphabet) {
  switch (alphabet) {
    case 2: return kBreakpoints2;
    case 3: return kBreakpoints3;
    case 4: return kBreakpoints4;
    case 5: return kBreakpoints5;
    case 6: return kBreakpoints6;
    case 7: return kBreakpoints7;
    case 8: return kBreakpoints8;
    case 9: return kBreakpoints9;
    case 10: return kBreakpoints10;
    default: throw ConfigError("SAX alphabet must lie in 2..10");
  }
}

std::string sax_word(std::span<const double> window, std::size_t paa_segments,
                     std::size_t alphabet) {
  if (window.empty()) throw InvariantError("SAX window must be non-empty");
  const auto breakpoints = sax_breakpoints(alphabet);
  const std::size_t segments = std::min(paa_segments, window.size());

  std::vector<double> values(window.begin(), window.end());
  znormalize(values);  // near-constant windows become all zeros -> middle word

  std::string word(segments, 'a');
  for (std::size_t s = 0; s < segments; ++s) {
    // Integer block boundaries; equal blocks when segments divides the window.
    const std::size_t begin = s * values.size() / segments;
    const std::size_t end = (s + 1) * values.size() / segments;
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += values[i];
    mean /= static_cast<double>(end - begin);
    std::size_t symbol = 0;
    for (double b : breakpoints) symbol += b <= mean ? 1 : 0;
    word[s] = static_cast<char>('a' + symbol);
  }
  return word;
}

std::map<std::string, std::uint32_t> bop_transform(std::span<const double> sequence,
                                                   const BopParams& params) {
  if (params.window < 1) throw ConfigError("BOP window must be >= 1");
  if (sequence.size() < params.window) {
    throw InvariantError("sequence length " + std::to_string(sequence.size()) +
                         " is shorter than the BOP window " + std::to_string(params.window));
  }
  std::map<std::string, std::uint32_t> histogram;
  std::string previous;
  for (std::size_t start = 0; start + params.window <= sequence.size(); ++start) {
    std::string word =
        sax_word(sequence.subspan(start, params.window), params.paa_segments, params.alphabet);
    if (word != previous) {
      histogram[word]++;
      previous = std::move(word);
    }
  }
  return histogram;
}

BopModel fit_bop(const std::vector<std::vector<std::vector<double>>>& channels,
                 const std::vector<std::size_t>& labels, std::size_t n_classes,
                 const BopParams& params) {
  if (channels.empty() || channels.size() != labels.size()) {
    throw InvariantError("BOP needs one label per training trace");
  }
  BopModel model;
  model.params = params;
  model.n_classes = n_classes;
  model.n_events = channels.front().size();
  model.samples_per_trace = channels.front().front().size();
  if (model.params.window > model.samples_per_trace) {
    // Documented degradation for short traces.
    fprintf(stderr, "bop: window %zu exceeds trace length %zu; shrinking\n", model.params.window,
            model.samples_per_trace);
    model.params.window = model.samples_per_trace;
  }
  model.params.paa_segments = std::min(model.params.paa_segments, model.params.window);
  model.labels = labels;
  model.histograms.reserve(channels.size());
  for (const auto& trace_channels : channels) {
    model.histograms.push_back(model.transform(trace_channels));
  }

  model.class_priors.assign(n_classes, 0.0);
  for (std::size_t label : labels) model.class_priors.at(label) += 1.0;
  for (double& p : model.class_priors) p /= static_cast<double>(labels.size());
  return model;
}

namespace {

double histogram_distance(const std::map<std::string, std::uint32_t>& a,
                          const std::map<std::string, std::uint32_t>& b) {
  double total = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    double diff = 0.0;
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      diff = static_cast<double>(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      diff = static_cast<double>(ib->second);
      ++ib;
    } else {
      diff = static_cast<double>(ia->second) - static_cast<double>(ib->second);
      ++ia;
      ++ib;
    }
    total += diff * diff;
  }
  return total;
}

}  // namespace

std::map<std::string, std::uint32_t> BopModel::transform(
    const std::vector<std::vector<double>>& channels) const {
  std::map<std::string, std::uint32_t> merged;
  for (std::size_t e = 0; e < channels.size(); ++e) {
    auto histogram = bop_transform(channels[e], params);
    const std::string tag = "e" + std::to_string(e) + ":";
    for (const auto& [word, count] : histogram) merged[tag + word] += count;
  }
  return merged;
}

std::vector<double> BopModel::scores(const std::vector<std::vector<double>>& channels) const {
  const auto test = transform(channels);

  bool overlap = false;
  for (const auto& [word, count] : test) {
    for (const auto& hist : histograms) {
      if (hist.count(word)) {
        overlap = true;
        break;
      }
    }
    if (overlap) break;
  }
  if (!overlap) return class_priors;  // nothing comparable: fall back to priors

  std::size_t best_idx = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < histograms.size(); ++i) {
    const double d = histogram_distance(test, histograms[i]);
    if (d < best_dist) {
      best_dist = d;
      best_idx = i;
    }
  }
  std::vector<double> out(n_classes, 0.0);
  out[labels[best_idx]] = 1.0;
  return out;
}

}  // namespace leakedweb
