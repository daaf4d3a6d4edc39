#include <doctest.h>

#include <filesystem>

#include "leakedweb/learners/model.hpp"
#include "leakedweb/learners/vectorize.hpp"
#include "leakedweb/rng.hpp"
#include "leakedweb/synth.hpp"

using namespace leakedweb;

namespace {

GeneratorConfig small_config(double noise_cv = 0.2) {
  GeneratorConfig config;
  for (int s = 0; s < 3; ++s) {
    SiteSignature sig;
    sig.label = "site" + std::to_string(s) + ".example";
    sig.events = {"cache-misses", "node-loads"};
    sig.base_rates = {200.0 * (s + 1), 900.0 / (s + 1)};
    sig.noise_cv = noise_cv;
    BurstWindow burst;
    burst.start_s = static_cast<double>(5 * s);
    burst.length_s = 5.0;
    burst.per_event_multiplier = {4.0};
    sig.bursts.push_back(burst);
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 6;
  config.samples_per_trace = 18;
  config.seed = 33;
  return config;
}

Trace random_probe(Rng& rng, std::size_t samples) {
  Trace trace;
  trace.label = "probe";
  trace.events = {"cache-misses", "node-loads"};
  trace.samples = CountMatrix(samples, 2);
  for (auto& value : trace.samples.data()) value = rng.below(2000);
  return trace;
}

}  // namespace

TEST_CASE("z-normalization is idempotent and zeroes constant channels") {
  Rng rng(6);
  std::vector<double> channel(40);
  for (auto& value : channel) value = rng.uniform() * 100.0;
  znormalize(channel);
  auto again = channel;
  znormalize(again);
  for (std::size_t i = 0; i < channel.size(); ++i) {
    CHECK(std::abs(again[i] - channel[i]) < 1e-9);
  }

  std::vector<double> constant(10, 42.0);
  znormalize(constant);
  for (double v : constant) CHECK(v == 0.0);
}

TEST_CASE("flatten_trace pads by repeating the final sample and truncates") {
  Trace trace;
  trace.label = "x";
  trace.events = {"a", "b"};
  trace.samples = CountMatrix(2, 2);
  trace.samples(0, 0) = 1;
  trace.samples(0, 1) = 2;
  trace.samples(1, 0) = 3;
  trace.samples(1, 1) = 4;

  const auto padded = flatten_trace(trace, {"a", "b"}, 4);
  CHECK(padded == std::vector<double>{1, 3, 3, 3, 2, 4, 4, 4});
  const auto cut = flatten_trace(trace, {"b"}, 1);
  CHECK(cut == std::vector<double>{2});
}

TEST_CASE("missing event column raises a contract error naming it") {
  Trace trace;
  trace.label = "x";
  trace.events = {"a"};
  trace.samples = CountMatrix(1, 1, 5);
  try {
    flatten_trace(trace, {"zz-absent"}, 1);
    FAIL("expected InvariantError");
  } catch (const InvariantError& e) {
    CHECK(std::string(e.what()).find("zz-absent") != std::string::npos);
  }
}

TEST_CASE("every family round-trips through JSON with identical predictions") {
  const auto ds = generate(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "lw_models";
  std::filesystem::create_directories(dir);

  Rng rng(1234);
  std::vector<Trace> probes;
  for (int i = 0; i < 100; ++i) probes.push_back(random_probe(rng, 18));

  const ModelFamily families[] = {ModelFamily::random_forest, ModelFamily::logit_boost,
                                  ModelFamily::dtw_knn, ModelFamily::bop, ModelFamily::shapelet};
  for (ModelFamily family : families) {
    CAPTURE(to_string(family));
    const auto model = train_family(family, ds, 7);
    const auto path = dir / (std::string(to_string(family)) + ".json");
    save_model(model, path);
    const auto loaded = load_model(path);
    CHECK(loaded.class_list == model.class_list);
    CHECK(loaded.events == model.events);
    for (const auto& probe : probes) {
      const auto before = predict(model, probe);
      const auto after = predict(loaded, probe);
      REQUIRE(before.label == after.label);
      REQUIRE(before.scores == after.scores);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("prediction handles shorter and longer traces without crashing") {
  const auto ds = generate(small_config(0.0));
  for (ModelFamily family : {ModelFamily::random_forest, ModelFamily::dtw_knn, ModelFamily::bop}) {
    CAPTURE(to_string(family));
    const auto model = train_family(family, ds, 3);
    Rng rng(9);
    const auto shorter = random_probe(rng, 5);
    const auto longer = random_probe(rng, 40);
    CHECK_NOTHROW(predict(model, shorter));
    CHECK_NOTHROW(predict(model, longer));
  }
}

TEST_CASE("training on a single-class dataset is rejected where required") {
  std::vector<Trace> traces;
  for (int i = 0; i < 4; ++i) {
    Trace trace;
    trace.label = "only";
    trace.events = {"e"};
    trace.samples = CountMatrix(6, 1, static_cast<std::uint64_t>(i));
    traces.push_back(std::move(trace));
  }
  const auto ds = Dataset::from_traces(std::move(traces), World::closed);
  CHECK_THROWS_AS(train_random_forest(ds, {}), InvariantError);
  CHECK_THROWS_AS(train_logit_boost(ds, {}), InvariantError);
  CHECK_THROWS_AS(train_shapelet(ds, {}), InvariantError);
}

TEST_CASE("prediction scores always form a distribution with argmax label") {
  const auto ds = generate(small_config(0.4));
  Rng rng(55);
  for (ModelFamily family : {ModelFamily::random_forest, ModelFamily::logit_boost,
                             ModelFamily::dtw_knn, ModelFamily::bop, ModelFamily::shapelet}) {
    CAPTURE(to_string(family));
    const auto model = train_family(family, ds, 11);
    for (int i = 0; i < 20; ++i) {
      const auto result = predict(model, random_probe(rng, 18));
      double total = 0.0;
      double best = -1.0;
      std::string best_label;
      for (std::size_t c = 0; c < result.scores.size(); ++c) {
        CHECK(result.scores[c] >= 0.0);
        total += result.scores[c];
        if (result.scores[c] > best) {
          best = result.scores[c];
          best_label = model.class_list[c];
        }
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(result.label == best_label);
    }
  }
}
