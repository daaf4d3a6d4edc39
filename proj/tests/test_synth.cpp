#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "leakedweb/learners/vectorize.hpp"
#include "leakedweb/rng.hpp"
#include "leakedweb/synth.hpp"

using namespace leakedweb;

namespace {

GeneratorConfig tiny_config(double noise_cv, std::size_t n_sites = 1,
                            std::size_t traces = 1, std::size_t samples = 10) {
  GeneratorConfig config;
  for (std::size_t s = 0; s < n_sites; ++s) {
    SiteSignature sig;
    sig.label = "site" + std::to_string(s);
    sig.events = {"cache-misses", "node-loads"};
    sig.base_rates = {100.0 * static_cast<double>(s + 1), 40.0 * static_cast<double>(s + 1)};
    sig.trend = {0.0, 0.0};
    sig.noise_cv = noise_cv;
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = traces;
  config.samples_per_trace = samples;
  config.seed = 42;
  return config;
}

}  // namespace

TEST_CASE("noiseless constant signature produces constant samples") {
  const auto ds = generate(tiny_config(0.0));
  REQUIRE(ds.traces.size() == 1);
  for (std::size_t r = 0; r < ds.traces[0].samples.rows(); ++r) {
    CHECK(ds.traces[0].samples(r, 0) == 100);
    CHECK(ds.traces[0].samples(r, 1) == 40);
  }
}

TEST_CASE("generation is deterministic for a fixed config") {
  const auto config = tiny_config(0.3, 3, 5, 20);
  const auto a = generate(config);
  const auto b = generate(config);
  CHECK(a == b);
}

TEST_CASE("closed-world shape: 30 sites x 70 traces x 60 samples x 4 events") {
  auto config = DeskBenchmark::closed_world();
  const auto ds = generate(config);
  CHECK(ds.traces.size() == 2100);
  CHECK(ds.class_list.size() == 30);
  for (const auto& trace : ds.traces) {
    REQUIRE(trace.samples.rows() == 60);
    REQUIRE(trace.samples.cols() == 4);
  }
}

TEST_CASE("open-world extras: one trace each under the reserved label") {
  auto config = tiny_config(0.1, 2, 3, 12);
  config.open_world_extra = 7;
  const auto ds = generate(config);
  CHECK(ds.world == World::open);
  std::size_t non_sensitive = 0;
  for (const auto& trace : ds.traces) {
    if (trace.label == kNonSensitiveLabel) ++non_sensitive;
  }
  CHECK(non_sensitive == 7);
  CHECK(ds.traces.size() == 2 * 3 + 7);
}

TEST_CASE("burst windows multiply the configured span") {
  auto config = tiny_config(0.0);
  BurstWindow burst;
  burst.start_s = 2.0;
  burst.length_s = 3.0;
  burst.per_event_multiplier = {5.0};
  config.signatures[0].bursts.push_back(burst);
  const auto ds = generate(config);
  const auto& samples = ds.traces[0].samples;
  CHECK(samples(1, 0) == 100);
  CHECK(samples(2, 0) == 500);
  CHECK(samples(4, 0) == 500);
  CHECK(samples(5, 0) == 100);
}

TEST_CASE("signature JSON round-trips") {
  const auto dir = std::filesystem::temp_directory_path() / "lw_sigs.json";
  auto config = DeskBenchmark::closed_world();
  save_signatures(config.signatures, dir);
  const auto back = load_signatures(dir);
  CHECK(back == config.signatures);
  std::filesystem::remove(dir);
}

// ---- oracle_dtw ----

TEST_CASE("oracle_dtw identities") {
  const std::vector<double> a = {3, 1, 4, 1, 5};
  CHECK(oracle_dtw(a, a) == 0.0);
  const std::vector<double> x = {7.5};
  const std::vector<double> y = {2.0};
  CHECK(oracle_dtw(x, y) == doctest::Approx(5.5));
  CHECK_THROWS_AS(oracle_dtw({}, a), InvariantError);
}

TEST_CASE("oracle_dtw hand-expanded 3x2 table") {
  // cost matrix for a=[0,1,2], b=[0,2] is [[0,2],[1,1],[2,0]];
  // D = [[0,2],[1,1],[3,1]] so the aligned distance is 1.
  const std::vector<double> a = {0, 1, 2};
  const std::vector<double> b = {0, 2};
  CHECK(oracle_dtw(a, b) == 1.0);
  CHECK(oracle_dtw(b, a) == 1.0);
}

TEST_CASE("property: oracle_dtw symmetry and self-distance on random pairs") {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(1 + rng.below(6)), b(1 + rng.below(6));
    for (auto& value : a) value = static_cast<double>(rng.below(3));
    for (auto& value : b) value = static_cast<double>(rng.below(3));
    CHECK(oracle_dtw(a, b) == oracle_dtw(b, a));
    CHECK(oracle_dtw(a, a) == 0.0);
    CHECK(oracle_dtw(a, b) >= 0.0);
  }
}

// ---- oracle_pearson ----

TEST_CASE("oracle_pearson affine dependence") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(2.0 * v + 3.0);
  CHECK(oracle_pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(oracle_pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("oracle_pearson two-pass hand computation") {
  // means 2.5/2.5; cov = 1; var_x = var_y = 1.25; rho = 1/1.25 = 0.8.
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> y = {1, 3, 2, 4};
  CHECK(oracle_pearson(x, y) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("oracle_pearson error paths and bounds") {
  const std::vector<double> x = {1, 2, 3};
  const std::vector<double> constant = {5, 5, 5};
  const std::vector<double> shorter = {1.0, 2.0};
  CHECK_THROWS_AS(oracle_pearson(x, constant), InvariantError);
  CHECK_THROWS_AS(oracle_pearson(x, shorter), InvariantError);

  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(4 + rng.below(20)), b(a.size());
    for (auto& value : a) value = rng.uniform() * 10.0;
    for (auto& value : b) value = rng.uniform() * 10.0;
    const double rho = oracle_pearson(a, b);
    CHECK(rho >= -1.0 - 1e-12);
    CHECK(rho <= 1.0 + 1e-12);
    // invariant under positive affine maps of either argument
    std::vector<double> scaled(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) scaled[j] = 3.0 * a[j] + 7.0;
    CHECK(oracle_pearson(scaled, b) == doctest::Approx(rho).epsilon(1e-9));
  }
}

TEST_CASE("separability anchor: noiseless distinct bases give perfect raw 1-NN") {
  auto config = tiny_config(0.0, 4, 6, 15);
  const auto ds = generate(config);
  SplitSpec spec;
  spec.train_fraction = 0.5;
  spec.seed = 8;
  const auto [train, test] = split(ds, spec);

  std::size_t correct = 0;
  for (const auto& probe : test.traces) {
    const auto px = flatten_trace(probe, test.events(), 15);
    double best = std::numeric_limits<double>::infinity();
    std::string best_label;
    for (const auto& proto : train.traces) {
      const auto qx = flatten_trace(proto, train.events(), 15);
      double dist = 0.0;
      for (std::size_t i = 0; i < px.size(); ++i) dist += (px[i] - qx[i]) * (px[i] - qx[i]);
      if (dist < best) {
        best = dist;
        best_label = proto.label;
      }
    }
    correct += best_label == probe.label ? 1 : 0;
  }
  CHECK(correct == test.traces.size());
}
