#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "leakedweb/features.hpp"
#include "leakedweb/rng.hpp"
#include "leakedweb/synth.hpp"

using namespace leakedweb;

namespace {

Trace make_trace(std::string label, std::vector<std::string> events,
                 std::vector<std::vector<std::uint64_t>> rows) {
  Trace trace;
  trace.label = std::move(label);
  trace.events = std::move(events);
  trace.samples = CountMatrix(rows.size(), trace.events.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) trace.samples(r, c) = rows[r][c];
  }
  return trace;
}

InstanceMatrix matrix_of(Matrix<double> rows, std::vector<std::size_t> labels,
                         std::vector<std::string> classes, std::vector<std::string> events) {
  InstanceMatrix matrix;
  matrix.rows = std::move(rows);
  matrix.labels = std::move(labels);
  matrix.class_list = std::move(classes);
  matrix.event_names = std::move(events);
  matrix.policy = InstancePolicy::per_sample;
  return matrix;
}

}  // namespace

TEST_CASE("build_instances per_sample: 2 traces x 3 samples give 6 instances") {
  auto t1 = make_trace("a", {"e1", "e2"}, {{1, 2}, {3, 4}, {5, 6}});
  auto t2 = make_trace("b", {"e1", "e2"}, {{7, 8}, {9, 10}, {11, 12}});
  const auto ds = Dataset::from_traces({t1, t2}, World::closed);
  const auto matrix = build_instances(ds, InstancePolicy::per_sample);
  CHECK(matrix.rows.rows() == 6);
  CHECK(matrix.rows.cols() == 2);
  CHECK(matrix.labels == std::vector<std::size_t>{0, 0, 0, 1, 1, 1});
  CHECK(matrix.rows(3, 1) == 8.0);
}

TEST_CASE("build_instances per_trace_summary: 4 events give 8 features") {
  std::vector<Trace> traces;
  Rng rng(3);
  for (int i = 0; i < 2; ++i) {
    Trace trace;
    trace.label = i ? "b" : "a";
    trace.events = default_event_names(4);
    trace.samples = CountMatrix(5, 4);
    for (auto& value : trace.samples.data()) value = rng.below(100);
    traces.push_back(std::move(trace));
  }
  const auto ds = Dataset::from_traces(std::move(traces), World::closed);
  const auto matrix = build_instances(ds, InstancePolicy::per_trace_summary);
  CHECK(matrix.rows.rows() == 2);
  CHECK(matrix.rows.cols() == 8);
  CHECK(matrix.event_columns(2) == std::vector<std::size_t>{4, 5});
}

TEST_CASE("per_trace_summary means equal base rates on a noiseless generator") {
  GeneratorConfig config;
  for (int s = 0; s < 2; ++s) {
    SiteSignature sig;
    sig.label = "s" + std::to_string(s);
    sig.events = {"e1", "e2"};
    sig.base_rates = {100.0 + 50.0 * s, 30.0 + 10.0 * s};
    sig.noise_cv = 0.0;
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 2;
  config.samples_per_trace = 8;
  const auto ds = generate(config);
  const auto matrix = build_instances(ds, InstancePolicy::per_trace_summary);
  for (std::size_t i = 0; i < matrix.rows.rows(); ++i) {
    const auto& sig = config.signatures[matrix.labels[i]];
    CHECK(matrix.rows(i, 0) == doctest::Approx(sig.base_rates[0]));
    CHECK(matrix.rows(i, 2) == doctest::Approx(sig.base_rates[1]));
    CHECK(matrix.rows(i, 1) == doctest::Approx(0.0));  // constant column: zero stddev
  }
}

TEST_CASE("score_feature: constant feature scores 0") {
  Matrix<double> rows(4, 1, 7.0);
  const auto matrix = matrix_of(std::move(rows), {0, 0, 1, 1}, {"a", "b"}, {"e"});
  CHECK(score_feature(matrix, 0) == 0.0);
}

TEST_CASE("score_feature: a class indicator scores 1") {
  Matrix<double> rows(6, 1);
  const std::vector<std::size_t> labels = {0, 0, 0, 1, 1, 1};
  for (std::size_t i = 0; i < 6; ++i) rows(i, 0) = labels[i] == 0 ? 1.0 : 0.0;
  const auto matrix = matrix_of(std::move(rows), labels, {"a", "b"}, {"e"});
  CHECK(score_feature(matrix, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("score_feature: 3-class toy equals the oracle_pearson composition") {
  // 6 instances, feature 1..6, classes a,a,b,b,c,c; expected value is the
  // class-frequency weighted mean of |pearson(Z, indicator_c)|.
  Matrix<double> rows(6, 1);
  for (std::size_t i = 0; i < 6; ++i) rows(i, 0) = static_cast<double>(i + 1);
  const std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2};
  const auto matrix = matrix_of(std::move(rows), labels, {"a", "b", "c"}, {"e"});

  const std::vector<double> z = {1, 2, 3, 4, 5, 6};
  double expected = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> indicator(6, 0.0);
    for (std::size_t i = 0; i < 6; ++i) indicator[i] = labels[i] == c ? 1.0 : 0.0;
    expected += (2.0 / 6.0) * std::abs(oracle_pearson(z, indicator));
  }
  CHECK(score_feature(matrix, 0) == doctest::Approx(expected).epsilon(1e-12));
  // the middle class is symmetric around the mean, so only a and c contribute
  CHECK(expected == doctest::Approx(2.0 / 3.0 * 0.8280786712108251).epsilon(1e-9));
}

TEST_CASE("rank_features: engineered top event wins with score near 1") {
  GeneratorConfig config;
  for (int s = 0; s < 3; ++s) {
    SiteSignature sig;
    sig.label = "s" + std::to_string(s);
    sig.events = {"cache-misses", "node-loads", "branch-misses"};
    // cache-misses encodes the class; the others are identical across classes
    sig.base_rates = {100.0 * std::pow(4.0, s), 500.0, 900.0};
    sig.noise_cv = 0.0;
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 4;
  config.samples_per_trace = 10;
  const auto ds = generate(config);
  const auto ranking = rank_features(ds);
  CHECK(ranking.entries[0].event == "cache-misses");
  CHECK(ranking.entries[0].score > 0.6);
  CHECK(ranking.entries[1].score == 0.0);
  CHECK(ranking.top_k(2) == std::vector<std::string>{"cache-misses", "node-loads"});
}

TEST_CASE("rank_features: all-constant features fall back to table rank order") {
  auto t1 = make_trace("a", {"branch-misses", "cache-misses", "zz-custom"},
                       {{5, 5, 5}, {5, 5, 5}});
  auto t2 = make_trace("b", {"branch-misses", "cache-misses", "zz-custom"},
                       {{5, 5, 5}, {5, 5, 5}});
  const auto ds = Dataset::from_traces({t1, t2}, World::closed);
  const auto ranking = rank_features(ds);
  REQUIRE(ranking.entries.size() == 3);
  CHECK(ranking.entries[0].event == "cache-misses");   // table rank 1
  CHECK(ranking.entries[1].event == "branch-misses");  // table rank 3
  CHECK(ranking.entries[2].event == "zz-custom");      // unknown events rank last
  for (const auto& entry : ranking.entries) CHECK(entry.score == 0.0);
}

TEST_CASE("rank_features rejects single-class datasets") {
  auto t1 = make_trace("a", {"e"}, {{1}, {2}});
  auto t2 = make_trace("a", {"e"}, {{3}, {4}});
  const auto ds = Dataset::from_traces({t1, t2}, World::closed);
  CHECK_THROWS_AS(rank_features(ds), InvariantError);
}

TEST_CASE("property: scores are invariant under positive affine transforms") {
  Rng rng(21);
  Matrix<double> rows(30, 2);
  std::vector<std::size_t> labels(30);
  for (std::size_t i = 0; i < 30; ++i) {
    labels[i] = i % 3;
    rows(i, 0) = rng.uniform() * 100.0;
    rows(i, 1) = rng.uniform() * 10.0;
  }
  auto matrix = matrix_of(std::move(rows), labels, {"a", "b", "c"}, {"e1", "e2"});
  const double base = score_feature(matrix, 0);

  auto transformed = matrix;
  for (std::size_t i = 0; i < 30; ++i) {
    transformed.rows(i, 0) = 42.0 * matrix.rows(i, 0) + 1000.0;
  }
  CHECK(score_feature(transformed, 0) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("property: permutation and duplication leave scores unchanged") {
  Rng rng(22);
  const std::size_t n = 24;
  Matrix<double> rows(n, 1);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 2;
    rows(i, 0) = rng.uniform() * 5.0;
  }
  const auto matrix = matrix_of(rows, labels, {"a", "b"}, {"e"});
  const double base = score_feature(matrix, 0);

  // permute instance order
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  Matrix<double> shuffled(n, 1);
  std::vector<std::size_t> shuffled_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled(i, 0) = rows(perm[i], 0);
    shuffled_labels[i] = labels[perm[i]];
  }
  CHECK(score_feature(matrix_of(std::move(shuffled), shuffled_labels, {"a", "b"}, {"e"}), 0) ==
        doctest::Approx(base).epsilon(1e-12));

  // duplicate every instance
  Matrix<double> doubled(2 * n, 1);
  std::vector<std::size_t> doubled_labels(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    doubled(2 * i, 0) = doubled(2 * i + 1, 0) = rows(i, 0);
    doubled_labels[2 * i] = doubled_labels[2 * i + 1] = labels[i];
  }
  CHECK(score_feature(matrix_of(std::move(doubled), doubled_labels, {"a", "b"}, {"e"}), 0) ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ranking is a total order over exactly the dataset events") {
  const auto ds = generate(DeskBenchmark::closed_world_16ev());
  // thin the dataset so the test stays fast
  const auto thin = subsample_per_class(ds, 2, 1);
  const auto ranking = rank_features(thin);
  REQUIRE(ranking.entries.size() == 16);
  std::vector<std::string> names;
  for (const auto& entry : ranking.entries) names.push_back(entry.event);
  std::sort(names.begin(), names.end());
  auto expected = thin.events();
  std::sort(expected.begin(), expected.end());
  CHECK(names == expected);
  for (std::size_t i = 1; i < ranking.entries.size(); ++i) {
    CHECK(ranking.entries[i - 1].score >= ranking.entries[i].score);
  }
}

TEST_CASE("ranking JSON round-trips") {
  const auto path = std::filesystem::temp_directory_path() / "lw_ranking.json";
  FeatureRanking ranking;
  ranking.entries = {{"cache-misses", 0.9}, {"node-loads", 0.5}};
  ranking.trace_count = 10;
  ranking.class_count = 2;
  save_ranking(ranking, path);
  const auto back = load_ranking(path);
  CHECK(back.entries == ranking.entries);
  CHECK(back.trace_count == 10);
  std::filesystem::remove(path);
}
