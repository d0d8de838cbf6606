#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fewner/tagging.hpp"

namespace fewner::metrics {

struct Counts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn); }
  double f1() const {
    const double p = precision();
    const double r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  bool operator==(const Counts&) const = default;
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Counts totals;
  std::map<std::string, Counts> per_type;
};

// Exact-match span micro-F1 over parallel per-sentence span lists. A
// predicted span counts as a true positive when an unmatched gold span has
// identical boundaries (and type, unless ignore_types). Duplicate spans must
// each find their own match.
EvalReport micro_f1(const std::vector<std::vector<tagging::Span>>& predicted,
                    const std::vector<std::vector<tagging::Span>>& gold,
                    bool ignore_types = false);

// Evaluation points along a training run; steps strictly increasing.
struct RunCurve {
  std::vector<std::pair<int, double>> points;  // (step, metric)
};

// First recorded step s such that every recorded score in [s, s + patience]
// is within epsilon of the curve's global maximum; the final step when no
// window qualifies.
int convergence_steps(const RunCurve& curve, double epsilon, int patience);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

Aggregate aggregate(const std::vector<double>& values);

// "61.42±0.47" — two decimals on both sides.
std::string format_mean_std(const Aggregate& agg);

struct ReportAggregate {
  Aggregate precision;
  Aggregate recall;
  Aggregate f1;
};

ReportAggregate aggregate_runs(const std::vector<EvalReport>& runs);

// {"precision","recall","f1","tp","fp","fn","per_type":{...}} for artifacts.
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace fewner::metrics
