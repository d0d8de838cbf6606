#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fewner/metrics.hpp"
#include "fewner/tagging.hpp"

using namespace fewner;
using metrics::EvalReport;
using metrics::RunCurve;
using tagging::Span;

using SpanLists = std::vector<std::vector<Span>>;

TEST_SUITE("metrics") {

TEST_CASE("micro_f1 basics") {
  SpanLists gold{{{0, 1, "A"}, {3, 3, "B"}}, {{2, 2, "C"}}};

  EvalReport perfect = metrics::micro_f1(gold, gold);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.totals == metrics::Counts{3, 0, 0});

  EvalReport none = metrics::micro_f1({{}, {}}, gold);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.totals == metrics::Counts{0, 0, 3});

  CHECK_THROWS(metrics::micro_f1({{}}, gold));  // sentence counts must align
}

TEST_CASE("micro_f1 counts matched boundaries plus types") {
  SpanLists gold{{{0, 1, "A"}, {3, 3, "B"}}, {{2, 2, "C"}}};
  SpanLists pred{{{0, 1, "A"}, {3, 3, "A"}}, {{2, 2, "C"}}};

  EvalReport report = metrics::micro_f1(pred, gold);
  CHECK(report.totals == metrics::Counts{2, 1, 1});
  CHECK(report.precision == doctest::Approx(2.0 / 3.0));
  CHECK(report.recall == doctest::Approx(2.0 / 3.0));
  CHECK(report.f1 == doctest::Approx(2.0 / 3.0));

  CHECK(report.per_type.at("A") == metrics::Counts{1, 1, 0});
  CHECK(report.per_type.at("B") == metrics::Counts{0, 0, 1});
  CHECK(report.per_type.at("C") == metrics::Counts{1, 0, 0});

  // The same boundaries match once the type is ignored.
  CHECK(metrics::micro_f1(pred, gold, true).f1 == 1.0);
}

TEST_CASE("micro_f1 makes duplicates find their own match") {
  SpanLists one_gold{{{0, 0, "A"}}};
  SpanLists dup_pred{{{0, 0, "A"}, {0, 0, "A"}}};
  CHECK(metrics::micro_f1(dup_pred, one_gold).totals == metrics::Counts{1, 1, 0});

  SpanLists dup_gold{{{0, 0, "A"}, {0, 0, "A"}}};
  SpanLists one_pred{{{0, 0, "A"}}};
  CHECK(metrics::micro_f1(one_pred, dup_gold).totals == metrics::Counts{1, 0, 1});
}

TEST_CASE("convergence_steps frozen examples") {
  // Climb, then sit at the maximum from step 100 on.
  RunCurve climb;
  for (int step = 0; step <= 300; step += 10) {
    climb.points.emplace_back(step, step < 100 ? 0.5 + step * 0.001 : 0.9);
  }
  CHECK(metrics::convergence_steps(climb, 0.01, 50) == 100);

  // A flat curve converges at its first recorded step.
  RunCurve flat;
  for (int step = 0; step <= 300; step += 10) flat.points.emplace_back(step, 0.75);
  CHECK(metrics::convergence_steps(flat, 0.01, 50) == 0);

  // A sawtooth that keeps dipping below max - epsilon never settles; the
  // final step is reported.
  RunCurve saw;
  for (int step = 0; step <= 300; step += 10) {
    saw.points.emplace_back(step, (step / 10) % 2 == 0 ? 0.9 : 0.5);
  }
  CHECK(metrics::convergence_steps(saw, 0.01, 50) == 300);

  // No qualifying window, even at the end.
  RunCurve tail;
  tail.points = {{0, 0.5}, {10, 1.0}, {20, 0.5}};
  CHECK(metrics::convergence_steps(tail, 0.01, 15) == 20);

  CHECK_THROWS(metrics::convergence_steps(RunCurve{}, 0.01, 50));
}

TEST_CASE("convergence step never grows when epsilon loosens") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RunCurve curve;
    for (int step = 0; step <= 200; step += 10) curve.points.emplace_back(step, dist(rng));
    const int tight = metrics::convergence_steps(curve, 0.01, 30);
    const int loose = metrics::convergence_steps(curve, 0.1, 30);
    CHECK(loose <= tight);
  }
}

TEST_CASE("aggregate mean and population stddev") {
  metrics::Aggregate single = metrics::aggregate({0.42});
  CHECK(single.mean == doctest::Approx(0.42));
  CHECK(single.stddev == 0.0);

  metrics::Aggregate pair = metrics::aggregate({0.5, 0.7});
  CHECK(pair.mean == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(pair.stddev == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(metrics::format_mean_std(pair) == "0.60±0.10");
  CHECK(metrics::format_mean_std({61.421, 0.4678}) == "61.42±0.47");

  metrics::Aggregate fwd = metrics::aggregate({0.1, 0.9, 0.4});
  metrics::Aggregate rev = metrics::aggregate({0.4, 0.1, 0.9});
  CHECK(fwd.mean == doctest::Approx(rev.mean).epsilon(1e-12));
  CHECK(fwd.stddev == doctest::Approx(rev.stddev).epsilon(1e-12));
}

TEST_CASE("aggregate_runs averages the three headline metrics") {
  EvalReport a;
  a.precision = 0.4;
  a.recall = 0.6;
  a.f1 = 0.5;
  EvalReport b;
  b.precision = 0.6;
  b.recall = 0.8;
  b.f1 = 0.7;

  metrics::ReportAggregate agg = metrics::aggregate_runs({a, b});
  CHECK(agg.precision.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(agg.recall.mean == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(agg.f1.mean == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(agg.f1.stddev == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("report_to_json carries totals and per-type counts") {
  SpanLists gold{{{0, 1, "A"}, {3, 3, "B"}}};
  SpanLists pred{{{0, 1, "A"}}};
  nlohmann::json j = metrics::report_to_json(metrics::micro_f1(pred, gold));
  CHECK(j.at("tp") == 1);
  CHECK(j.at("fp") == 0);
  CHECK(j.at("fn") == 1);
  CHECK(j.at("precision") == 1.0);
  CHECK(j.at("recall") == 0.5);
  CHECK(j.at("per_type").contains("B"));
}

}  // TEST_SUITE
