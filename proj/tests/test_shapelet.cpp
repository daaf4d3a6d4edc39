#include <doctest.h>

#include <cmath>

#include "leakedweb/learners/shapelet.hpp"
#include "leakedweb/learners/model.hpp"
#include "leakedweb/learners/vectorize.hpp"
#include "leakedweb/rng.hpp"
#include "leakedweb/synth.hpp"

using namespace leakedweb;

namespace {

// Class A embeds the spike [0,5,0] at a random offset over a flat baseline;
// class B is entirely flat. 10 traces each.
std::pair<std::vector<std::vector<std::vector<double>>>, std::vector<std::size_t>> spike_toy() {
  std::vector<std::vector<std::vector<double>>> channels;
  std::vector<std::size_t> labels;
  Rng rng(41);
  for (int i = 0; i < 10; ++i) {
    std::vector<double> series(20, 0.0);
    const std::size_t offset = 1 + rng.below(16);
    series[offset + 1] = 5.0;
    znormalize(series);
    channels.push_back({series});
    labels.push_back(0);
  }
  for (int i = 0; i < 10; ++i) {
    std::vector<double> series(20, 0.0);  // z-normalized flat channel is all zeros
    channels.push_back({series});
    labels.push_back(1);
  }
  return {channels, labels};
}

}  // namespace

TEST_CASE("entropy of a 50/50 binary parent is exactly 1 bit") {
  CHECK(entropy_bits({10, 10}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(entropy_bits({7}) == 0.0);
  CHECK(entropy_bits({0, 4}) == 0.0);
  CHECK(entropy_bits({1, 1, 1, 1}) == doctest::Approx(2.0));
}

TEST_CASE("min_shapelet_distance: exact embedded match scores 0") {
  std::vector<double> series = {0, 0, 0, 5, 0, 0, 0, 0};
  std::vector<double> spike = {0, 5, 0};
  znormalize(spike);
  CHECK(min_shapelet_distance(series, spike) == doctest::Approx(0.0).epsilon(1e-12));

  // A flat series has all-zero z-normalized windows, so the distance is the
  // root mean square of the shapelet itself, which is 1 for z-normed shapes.
  const std::vector<double> flat(8, 3.0);
  CHECK(min_shapelet_distance(flat, spike) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("spike toy: selected shapelet gain equals the parent entropy") {
  auto [channels, labels] = spike_toy();
  ShapeletParams params;
  params.min_len = 3;
  params.max_len = 3;
  params.seed = 1;
  const auto model = fit_shapelet(channels, labels, 2, params);

  // Root must be an internal node that splits 10/10 perfectly.
  REQUIRE(model.nodes.size() >= 3);
  const auto& root = model.nodes[0];
  REQUIRE(root.event == 0);
  const auto& left = model.nodes[static_cast<std::size_t>(root.left)];
  const auto& right = model.nodes[static_cast<std::size_t>(root.right)];
  REQUIRE(left.event == -1);
  REQUIRE(right.event == -1);
  // each child is pure: gain = H(10/10) - 0 = 1 bit, the parent entropy
  CHECK(entropy_bits(left.class_counts) == 0.0);
  CHECK(entropy_bits(right.class_counts) == 0.0);
  std::size_t left_total = left.class_counts[0] + left.class_counts[1];
  std::size_t right_total = right.class_counts[0] + right.class_counts[1];
  CHECK(left_total == 10);
  CHECK(right_total == 10);

  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto scores = model.scores(channels[i]);
    CHECK(scores[labels[i]] == doctest::Approx(1.0));
  }
}

TEST_CASE("single-class input produces a one-leaf tree") {
  std::vector<std::vector<std::vector<double>>> channels;
  for (int i = 0; i < 4; ++i) {
    channels.push_back({{1.0, 2.0, 3.0, 4.0, 5.0, 6.0}});
  }
  const auto model = fit_shapelet(channels, {0, 0, 0, 0}, 1, {});
  REQUIRE(model.nodes.size() == 1);
  CHECK(model.nodes[0].event == -1);
  CHECK(model.nodes[0].class_counts == std::vector<std::size_t>{4});
}

TEST_CASE("internal nodes partition their instance set") {
  GeneratorConfig config;
  for (int s = 0; s < 3; ++s) {
    SiteSignature sig;
    sig.label = "s" + std::to_string(s);
    sig.events = {"cache-misses"};
    sig.base_rates = {800.0};
    sig.noise_cv = 0.15;
    BurstWindow burst;
    burst.start_s = static_cast<double>(6 * s);
    burst.length_s = 6.0;
    burst.per_event_multiplier = {5.0};
    sig.bursts.push_back(burst);
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 6;
  config.samples_per_trace = 24;
  config.seed = 77;
  const auto ds = generate(config);

  ShapeletParams params;
  params.seed = 5;
  params.max_candidates = 2000;
  const auto trained = train_shapelet(ds, params);
  const auto& model = std::get<ShapeletModel>(trained.impl);

  // Every internal node's children hold exactly the parent's instances.
  std::vector<std::size_t> totals(model.nodes.size(), 0);
  for (std::size_t n = model.nodes.size(); n-- > 0;) {
    const auto& node = model.nodes[n];
    if (node.event == -1) {
      std::size_t total = 0;
      for (std::size_t c : node.class_counts) total += c;
      totals[n] = total;
    } else {
      totals[n] = totals[static_cast<std::size_t>(node.left)] +
                  totals[static_cast<std::size_t>(node.right)];
      CHECK(totals[static_cast<std::size_t>(node.left)] > 0);
      CHECK(totals[static_cast<std::size_t>(node.right)] > 0);
    }
  }
  CHECK(totals[0] == ds.traces.size());

  // training accuracy should be high on this shape-separable set
  std::size_t correct = 0;
  for (const auto& trace : ds.traces) {
    correct += predict(trained, trace).label == trace.label ? 1 : 0;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(ds.traces.size()) >= 0.9);
}

TEST_CASE("shapelet training is deterministic in the seed") {
  auto [channels, labels] = spike_toy();
  ShapeletParams params;
  params.seed = 9;
  params.max_candidates = 50;  // force sampling
  const auto a = fit_shapelet(channels, labels, 2, params);
  const auto b = fit_shapelet(channels, labels, 2, params);
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (std::size_t n = 0; n < a.nodes.size(); ++n) {
    CHECK(a.nodes[n].event == b.nodes[n].event);
    CHECK(a.nodes[n].threshold == b.nodes[n].threshold);
    CHECK(a.nodes[n].values == b.nodes[n].values);
  }
}
