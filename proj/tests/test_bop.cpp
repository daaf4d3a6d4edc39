#include <doctest.h>

#include <numeric>

#include "leakedweb/learners/bop.hpp"
#include "leakedweb/learners/model.hpp"
#include "leakedweb/synth.hpp"

using namespace leakedweb;

TEST_CASE("sax breakpoints for alphabet 4 are the normal quartiles") {
  const auto bp = sax_breakpoints(4);
  REQUIRE(bp.size() == 3);
  CHECK(bp[0] == doctest::Approx(-0.6744897501960817));
  CHECK(bp[1] == 0.0);
  CHECK(bp[2] == doctest::Approx(0.6744897501960817));
  CHECK_THROWS_AS(sax_breakpoints(1), ConfigError);
  CHECK_THROWS_AS(sax_breakpoints(11), ConfigError);
}

TEST_CASE("constant sequence collapses to one middle word with count 1") {
  const std::vector<double> flat(30, 5.0);
  const auto histogram = bop_transform(flat, {});
  REQUIRE(histogram.size() == 1);
  // z-normalized constant window is all zeros; zero sits above breakpoints
  // {-0.6745, 0}, so every segment symbolizes as 'c'.
  CHECK(histogram.begin()->first == "cccccc");
  CHECK(histogram.begin()->second == 1);
}

TEST_CASE("sequence length equal to the window yields exactly one word") {
  std::vector<double> ramp(24);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  const auto histogram = bop_transform(ramp, {});
  REQUIRE(histogram.size() == 1);
  CHECK(histogram.begin()->second == 1);
}

TEST_CASE("hand-executed SAX computation for the ramp 1..30") {
  // Each window of 24 is an arithmetic ramp; z-normalization maps them all
  // to the same shape, so numerosity reduction leaves one word.
  // For the window 1..24: mean 12.5, population sd sqrt(1150/24) = 6.92219,
  // PAA segment means 2.5, 6.5, 10.5, 14.5, 18.5, 22.5 give z-scores
  // -1.4446, -0.8668, -0.2889, +0.2889, +0.8668, +1.4446 and symbols
  // a, a, b, c, d, d against breakpoints {-0.6745, 0, +0.6745}.
  std::vector<double> ramp(30);
  std::iota(ramp.begin(), ramp.end(), 1.0);
  const auto histogram = bop_transform(ramp, {.window = 24, .paa_segments = 6, .alphabet = 4});
  REQUIRE(histogram.size() == 1);
  CHECK(histogram.begin()->first == "aabcdd");
  CHECK(histogram.begin()->second == 1);
}

TEST_CASE("numerosity reduction counts runs once but separate runs twice") {
  // An up-ramp, a constant stretch, then another up-ramp: the ramp word
  // appears in two separate runs.
  std::vector<double> seq;
  for (int i = 0; i < 8; ++i) seq.push_back(i);
  for (int i = 0; i < 8; ++i) seq.push_back(7.0);
  for (int i = 0; i < 8; ++i) seq.push_back(7.0 + i);
  const auto histogram = bop_transform(seq, {.window = 8, .paa_segments = 4, .alphabet = 4});
  std::uint32_t ramp_count = 0;
  for (const auto& [word, count] : histogram) {
    if (word == "abcd") ramp_count = count;
  }
  CHECK(ramp_count == 2);
}

TEST_CASE("bop transform rejects sequences shorter than the window") {
  const std::vector<double> shorty(10, 1.0);
  CHECK_THROWS_AS(bop_transform(shorty, {.window = 24}), InvariantError);
}

TEST_CASE("bop model: training trace is classified as itself") {
  GeneratorConfig config;
  for (int s = 0; s < 3; ++s) {
    SiteSignature sig;
    sig.label = "s" + std::to_string(s);
    sig.events = {"cache-misses"};
    sig.base_rates = {500.0};
    sig.noise_cv = 0.0;
    BurstWindow burst;
    burst.start_s = static_cast<double>(10 * s);
    burst.length_s = 8.0;
    burst.per_event_multiplier = {5.0};
    sig.bursts.push_back(burst);
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 3;
  config.samples_per_trace = 40;
  const auto ds = generate(config);
  const auto model = train_bop(ds, {.window = 12, .paa_segments = 4, .alphabet = 4});
  for (const auto& trace : ds.traces) {
    CHECK(predict(model, trace).label == trace.label);
  }
}

TEST_CASE("bop separates classes that differ only in burst position") {
  // A burst anchored at t=0 has no rising edge, one in the middle has both
  // edges, so the word vocabularies differ. A deterministic ramp keeps the
  // off-burst windows structured (z-normalizing a nearly flat noisy window
  // would amplify the noise into random words).
  GeneratorConfig config;
  for (int s = 0; s < 2; ++s) {
    SiteSignature sig;
    sig.label = s ? "late" : "early";
    sig.events = {"cache-misses"};
    sig.base_rates = {1000.0};
    sig.trend = {50.0};
    sig.noise_cv = 0.01;
    BurstWindow burst;
    burst.start_s = s ? 24.0 : 0.0;
    burst.length_s = 10.0;
    burst.per_event_multiplier = {6.0};
    sig.bursts.push_back(burst);
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 10;
  config.samples_per_trace = 40;
  config.seed = 12;
  const auto ds = generate(config);
  SplitSpec split_spec;
  split_spec.seed = 4;
  const auto [train, test] = split(ds, split_spec);
  const auto model = train_bop(train, {.window = 10, .paa_segments = 5, .alphabet = 4});
  std::size_t correct = 0;
  for (const auto& trace : test.traces) {
    correct += predict(model, trace).label == trace.label ? 1 : 0;
  }
  CHECK(correct == test.traces.size());
}

TEST_CASE("bop window auto-shrinks for short traces") {
  GeneratorConfig config;
  SiteSignature sig;
  sig.label = "a";
  sig.events = {"e"};
  sig.base_rates = {100.0};
  sig.noise_cv = 0.3;
  config.signatures.push_back(sig);
  sig.label = "b";
  sig.base_rates = {900.0};
  config.signatures.push_back(sig);
  config.n_traces_per_site = 3;
  config.samples_per_trace = 10;  // shorter than the default window of 24
  const auto ds = generate(config);
  const auto model = train_bop(ds, {});
  CHECK(std::get<BopModel>(model.impl).params.window == 10);
  CHECK_NOTHROW(predict(model, ds.traces[0]));
}

TEST_CASE("empty vocabulary overlap falls back to the class prior") {
  std::vector<std::vector<std::vector<double>>> channels;
  std::vector<std::size_t> labels;
  // majority class 0 (2 ramps), minority class 1 (1 inverse ramp)
  channels.push_back({{0, 1, 2, 3, 4, 5, 6, 7}});
  channels.push_back({{0, 1, 2, 3, 4, 5, 6, 7}});
  channels.push_back({{7, 6, 5, 4, 3, 2, 1, 0}});
  labels = {0, 0, 1};
  const auto model = fit_bop(channels, labels, 2, {.window = 8, .paa_segments = 4, .alphabet = 4});

  BopModel starved = model;
  starved.histograms = {{{"e0:zzzz", 1}}, {{"e0:zzzz", 1}}, {{"e0:yyyy", 1}}};
  const auto scores = starved.scores({{0, 1, 2, 3, 4, 5, 6, 7}});
  CHECK(scores[0] == doctest::Approx(2.0 / 3.0));
  CHECK(scores[1] == doctest::Approx(1.0 / 3.0));
}
