#include "fewner/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fewner::metrics {

EvalReport micro_f1(const std::vector<std::vector<tagging::Span>>& predicted,
                    const std::vector<std::vector<tagging::Span>>& gold, bool ignore_types) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("micro_f1: predicted has " + std::to_string(predicted.size()) +
                                " sentences, gold has " + std::to_string(gold.size()));
  }
  EvalReport report;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    std::vector<bool> claimed(gold[i].size(), false);
    for (const tagging::Span& p : predicted[i]) {
      bool matched = false;
      for (std::size_t g = 0; g < gold[i].size(); ++g) {
        if (claimed[g]) continue;
        const tagging::Span& gs = gold[i][g];
        if (gs.start == p.start && gs.end == p.end && (ignore_types || gs.type == p.type)) {
          claimed[g] = true;
          matched = true;
          break;
        }
      }
      if (matched) {
        ++report.totals.tp;
        if (!ignore_types) ++report.per_type[p.type].tp;
      } else {
        ++report.totals.fp;
        if (!ignore_types) ++report.per_type[p.type].fp;
      }
    }
    for (std::size_t g = 0; g < gold[i].size(); ++g) {
      if (!claimed[g]) {
        ++report.totals.fn;
        if (!ignore_types) ++report.per_type[gold[i][g].type].fn;
      }
    }
  }
  report.precision = report.totals.precision();
  report.recall = report.totals.recall();
  report.f1 = report.totals.f1();
  return report;
}

int convergence_steps(const RunCurve& curve, double epsilon, int patience) {
  const auto& pts = curve.points;
  if (pts.empty()) {
    throw std::invalid_argument("convergence_steps: empty curve");
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].first <= pts[i - 1].first) {
      throw std::invalid_argument("convergence_steps: steps must be strictly increasing");
    }
  }
  double gmax = pts[0].second;
  for (const auto& [step, score] : pts) gmax = std::max(gmax, score);

  for (std::size_t i = 0; i < pts.size(); ++i) {
    const int s = pts[i].first;
    bool stable = true;
    for (std::size_t j = i; j < pts.size() && pts[j].first <= s + patience; ++j) {
      if (std::abs(pts[j].second - gmax) > epsilon) {
        stable = false;
        break;
      }
    }
    if (stable) return s;
  }
  return pts.back().first;
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("aggregate: no values");
  }
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;  // population
  return {mean, std::sqrt(var)};
}

std::string format_mean_std(const Aggregate& agg) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", agg.mean, agg.stddev);
  return buf;
}

ReportAggregate aggregate_runs(const std::vector<EvalReport>& runs) {
  if (runs.empty()) {
    throw std::invalid_argument("aggregate_runs: no reports");
  }
  std::vector<double> p, r, f;
  for (const EvalReport& rep : runs) {
    p.push_back(rep.precision);
    r.push_back(rep.recall);
    f.push_back(rep.f1);
  }
  return {aggregate(p), aggregate(r), aggregate(f)};
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j{{"precision", report.precision}, {"recall", report.recall},
                   {"f1", report.f1},               {"tp", report.totals.tp},
                   {"fp", report.totals.fp},        {"fn", report.totals.fn}};
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [type, c] : report.per_type) {
    per[type] = {{"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()},
                 {"tp", c.tp},                 {"fp", c.fp},           {"fn", c.fn}};
  }
  j["per_type"] = std::move(per);
  return j;
}

}  // namespace fewner::metrics
