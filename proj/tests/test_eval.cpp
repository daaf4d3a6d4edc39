#include <doctest.h>

#include <cmath>
#include <sstream>

#include "leakedweb/eval.hpp"
#include "leakedweb/features.hpp"
#include "leakedweb/rng.hpp"

using namespace leakedweb;

namespace {

ConfusionMatrix confusion_2x2(std::uint64_t aa, std::uint64_t ab, std::uint64_t ba,
                              std::uint64_t bb) {
  ConfusionMatrix confusion;
  confusion.classes = {"a", "b"};
  confusion.counts = Matrix<std::uint64_t>(2, 2);
  confusion.counts(0, 0) = aa;
  confusion.counts(0, 1) = ab;
  confusion.counts(1, 0) = ba;
  confusion.counts(1, 1) = bb;
  return confusion;
}

GeneratorConfig eval_config(std::size_t sites = 3, double noise = 0.1) {
  GeneratorConfig config;
  for (std::size_t s = 0; s < sites; ++s) {
    SiteSignature sig;
    sig.label = "s" + std::to_string(s);
    sig.events = {"cache-misses", "node-loads", "branch-misses"};
    sig.base_rates = {100.0 * std::pow(3.0, static_cast<double>(s)), 700.0,
                      50.0 + 400.0 * static_cast<double>(s)};
    sig.noise_cv = noise;
    config.signatures.push_back(std::move(sig));
  }
  config.n_traces_per_site = 8;
  config.samples_per_trace = 12;
  config.seed = 21;
  return config;
}

}  // namespace

TEST_CASE("hand-built confusion [[8,2],[4,6]] reproduces exact arithmetic") {
  // total 20, diagonal 14 -> accuracy 0.7
  // class a: p = 8/12, r = 8/10, f = 2pr/(p+r) = 8/11
  // class b: p = 6/8,  r = 6/10, f = 2/3
  const auto report = report_from_confusion(confusion_2x2(8, 2, 4, 6));
  CHECK(report.accuracy == doctest::Approx(0.7).epsilon(1e-15));
  REQUIRE(report.per_class.size() == 2);
  CHECK(report.per_class[0].precision == doctest::Approx(8.0 / 12.0).epsilon(1e-15));
  CHECK(report.per_class[0].recall == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(report.per_class[0].f_measure == doctest::Approx(8.0 / 11.0).epsilon(1e-15));
  CHECK(report.per_class[1].precision == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(report.per_class[1].recall == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(report.per_class[1].f_measure == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(report.macro_f == doctest::Approx(23.0 / 33.0).epsilon(1e-12));
  CHECK(report.weighted_f == doctest::Approx(23.0 / 33.0).epsilon(1e-12));
}

TEST_CASE("perfect predictor scores 1.0 everywhere") {
  const auto report = report_from_confusion(confusion_2x2(10, 0, 0, 10));
  CHECK(report.accuracy == 1.0);
  for (const auto& metrics : report.per_class) {
    CHECK(metrics.precision == 1.0);
    CHECK(metrics.recall == 1.0);
    CHECK(metrics.f_measure == 1.0);
  }
}

TEST_CASE("guarded division when p + r == 0") {
  // class b never predicted and never correct: p = 0, r = 0 -> f = 0
  const auto report = report_from_confusion(confusion_2x2(10, 0, 10, 0));
  CHECK(report.per_class[1].precision == 0.0);
  CHECK(report.per_class[1].recall == 0.0);
  CHECK(report.per_class[1].f_measure == 0.0);
}

TEST_CASE("property: metrics match a brute-force recount from pairs") {
  Rng rng(17);
  for (int round = 0; round < 25; ++round) {
    const std::size_t n_classes = 2 + rng.below(4);
    const std::size_t n = 20 + rng.below(100);
    std::vector<std::size_t> actual(n), predicted(n);
    for (std::size_t i = 0; i < n; ++i) {
      actual[i] = rng.below(n_classes);
      predicted[i] = rng.below(n_classes);
    }
    ConfusionMatrix confusion;
    for (std::size_t c = 0; c < n_classes; ++c) confusion.classes.push_back(std::to_string(c));
    confusion.counts = Matrix<std::uint64_t>(n_classes, n_classes, 0);
    for (std::size_t i = 0; i < n; ++i) confusion.counts(actual[i], predicted[i])++;
    const auto report = report_from_confusion(confusion);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += actual[i] == predicted[i] ? 1 : 0;
    CHECK(report.accuracy == doctest::Approx(static_cast<double>(hits) / n).epsilon(1e-12));

    for (std::size_t c = 0; c < n_classes; ++c) {
      std::size_t tp = 0, actual_c = 0, predicted_c = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += (actual[i] == c && predicted[i] == c) ? 1 : 0;
        actual_c += actual[i] == c ? 1 : 0;
        predicted_c += predicted[i] == c ? 1 : 0;
      }
      const double p = predicted_c ? static_cast<double>(tp) / predicted_c : 0.0;
      const double r = actual_c ? static_cast<double>(tp) / actual_c : 0.0;
      CHECK(report.per_class[c].precision == doctest::Approx(p).epsilon(1e-12));
      CHECK(report.per_class[c].recall == doctest::Approx(r).epsilon(1e-12));
    }
  }
}

TEST_CASE("evaluate: end-to-end on a separable dataset") {
  const auto ds = generate(eval_config(3, 0.0));
  SplitSpec spec;
  spec.seed = 3;
  const auto [train, test] = split(ds, spec);
  const auto model = train_family(ModelFamily::random_forest, train, 1);
  const auto report = evaluate(model, test);
  CHECK(report.accuracy == 1.0);
  CHECK(report.confusion.total() == test.traces.size());
  CHECK_THROWS_AS(evaluate(model, Dataset{}), InvariantError);
}

TEST_CASE("open_world_prepare merges, relabels, dedupes and validates") {
  const auto closed = generate(eval_config());
  GeneratorConfig extra_config = eval_config();
  extra_config.seed = 999;
  extra_config.n_traces_per_site = 1;
  auto extra = generate(extra_config);
  for (auto& trace : extra.traces) trace.label = "unique" + std::to_string(&trace - extra.traces.data());
  extra.class_list.clear();
  for (const auto& trace : extra.traces) extra.class_list.push_back(trace.label);

  const auto merged = open_world_prepare(closed, extra);
  CHECK(merged.world == World::open);
  CHECK(merged.class_list.size() == closed.class_list.size() + 1);
  CHECK(merged.class_list.back() == kNonSensitiveLabel);
  CHECK(merged.traces.size() == closed.traces.size() + extra.traces.size());

  SUBCASE("empty extras are rejected") {
    Dataset none;
    CHECK_THROWS_AS(open_world_prepare(closed, none), InvariantError);
  }
  SUBCASE("label collisions with sensitive sites are rejected") {
    auto colliding = extra;
    colliding.traces[0].label = closed.class_list[0];
    colliding.class_list[0] = closed.class_list[0];
    CHECK_THROWS_AS(open_world_prepare(closed, colliding), InvariantError);
  }
  SUBCASE("duplicate extra traces are dropped with a warning") {
    auto doubled = extra;
    doubled.traces.push_back(doubled.traces[0]);
    doubled.traces.back().label = "copycat";
    doubled.class_list.push_back("copycat");
    const auto deduped = open_world_prepare(closed, doubled);
    CHECK(deduped.traces.size() == merged.traces.size());
  }
}

TEST_CASE("run_sweep: leakage guard and degradation direction") {
  auto config = eval_config(3, 0.15);
  config.n_traces_per_site = 10;

  SweepSpec spec;
  spec.families = {ModelFamily::random_forest};
  spec.train_traces_grid = {7, 2};
  spec.feature_count_grid = {3, 2};
  spec.samples_grid = {12, 4};
  spec.baseline_train_traces = 7;
  spec.baseline_features = 3;
  spec.baseline_samples = 12;
  spec.train_fraction = 0.7;
  spec.base_seed = 5;

  const auto outcome = run_sweep(SweepSource(config), spec);
  CHECK(outcome.warnings.empty());
  // unique grid points: {7,2} x {3} x {12} plus {7} x {2} x {12} plus {7} x {3} x {4}
  CHECK(outcome.reports.size() == 4);
  for (const auto& report : outcome.reports) {
    CHECK(report.sweep_coords.at("family") == "random_forest");
    CHECK(report.accuracy >= 0.0);
    CHECK(report.accuracy <= 1.0);
  }

  SUBCASE("identical spec twice gives identical reports") {
    const auto again = run_sweep(SweepSource(config), spec);
    REQUIRE(again.reports.size() == outcome.reports.size());
    for (std::size_t i = 0; i < again.reports.size(); ++i) {
      CHECK(again.reports[i].accuracy == outcome.reports[i].accuracy);
      CHECK(again.reports[i].sweep_coords == outcome.reports[i].sweep_coords);
    }
  }

  SUBCASE("oversized grid points are skipped with warnings") {
    auto greedy = spec;
    greedy.train_traces_grid = {100, 7};
    greedy.feature_count_grid = {99, 3};
    greedy.samples_grid = {500, 12};
    const auto skipped = run_sweep(SweepSource(config), greedy);
    CHECK(skipped.warnings.size() == 3);
  }
}

TEST_CASE("feature ranking inside the sweep ignores test traces") {
  // Perturbing what ends up in the test split must not change the ranking
  // computed on the training side: rank on the training split directly and
  // compare against a run where test traces were zeroed out.
  auto config = eval_config(3, 0.1);
  config.n_traces_per_site = 6;
  auto base = generate(config);
  SplitSpec split_spec;
  split_spec.train_fraction = 0.7;
  split_spec.seed = 42;
  auto [train, test] = split(base, split_spec);
  const auto ranking_before = rank_features(train);

  for (auto& trace : test.traces) {
    for (auto& value : trace.samples.data()) value = 777;  // perturb test only
  }
  const auto ranking_after = rank_features(train);
  CHECK(ranking_before.entries == ranking_after.entries);
}

TEST_CASE("emit_report formats") {
  const auto report = report_from_confusion(confusion_2x2(8, 2, 4, 6));
  SUBCASE("csv has a header and one row") {
    const auto text = report_string({report}, ReportFormat::csv);
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    CHECK(line ==
          "family,world,n_train_traces,n_features,samples_per_trace,repetition,accuracy,macro_f,"
          "weighted_f");
    std::getline(lines, line);
    CHECK(line.find("0.7000") != std::string::npos);
    CHECK(!std::getline(lines, line));
  }
  SUBCASE("markdown table renders the grid") {
    const auto text = report_string({report}, ReportFormat::markdown_table);
    CHECK(text.find("| family |") != std::string::npos);
    CHECK(text.find("| 0.7000 |") != std::string::npos);
  }
  SUBCASE("json round-trips to equal reports") {
    auto tagged = report;
    tagged.sweep_coords = {{"family", "bop"}, {"n_train_traces", "5"}};
    const auto text = report_string({tagged, report}, ReportFormat::json);
    const auto back = parse_report_json(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].accuracy == tagged.accuracy);
    CHECK(back[0].macro_f == tagged.macro_f);
    CHECK(back[0].weighted_f == tagged.weighted_f);
    CHECK(back[0].sweep_coords == tagged.sweep_coords);
    CHECK(back[0].confusion.counts == tagged.confusion.counts);
    CHECK(back[0].per_class.size() == tagged.per_class.size());
    for (std::size_t c = 0; c < back[0].per_class.size(); ++c) {
      CHECK(back[0].per_class[c].precision == tagged.per_class[c].precision);
      CHECK(back[0].per_class[c].f_measure == tagged.per_class[c].f_measure);
    }
  }
  SUBCASE("empty report list is rejected") {
    std::ostringstream out;
    CHECK_THROWS_AS(emit_report({}, ReportFormat::csv, out), InvariantError);
  }
}
