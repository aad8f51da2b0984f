// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>

namespace selftrain::metrics {

Json EvalReport::to_json(const LabelSchema& schema) const {
  Json j;
  j["macro_f1"] = macro_f1;
  j["accuracy"] = accuracy;
  Json per = Json::object();
  for (const auto& c : schema.classes()) per[c] = per_class_f1.at(c);
  j["per_class_f1"] = per;
  j["n"] = n;
  return j;
}

EvalReport macro_f1(std::span<const std::string> gold, std::span<const std::string> pred,
                    const LabelSchema& schema) {
  if (gold.size() != pred.size()) {
    throw ValidationError("macro_f1: gold has " + std::to_string(gold.size()) +
                          " labels but pred has " + std::to_string(pred.size()));
  }
  const std::size_t k = schema.size();
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::size_t g = schema.require(gold[i]);
    std::size_t p = schema.require(pred[i]);
    if (g == p) {
      ++tp[g];
      ++correct;
    } else {
      ++fp[p];
      ++fn[g];
    }
  }

  EvalReport r;
  r.n = gold.size();
  r.accuracy = r.n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.n);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double precision = tp[c] + fp[c] == 0 ? 0.0 : double(tp[c]) / double(tp[c] + fp[c]);
    double recall = tp[c] + fn[c] == 0 ? 0.0 : double(tp[c]) / double(tp[c] + fn[c]);
    double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    r.per_class_f1[schema.at(c)] = f1;
    sum += f1;
  }
  r.macro_f1 = sum / static_cast<double>(k);
  return r;
}

double t_critical(std::size_t df, double alpha) {
  if (df == 0) throw ValidationError("t_critical: df must be positive");
  boost::math::students_t dist(static_cast<double>(df));
  return boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
}

TTestResult paired_t_test(std::span<const double> scores_a, std::span<const double> scores_b,
                          double alpha) {
  if (scores_a.size() != scores_b.size()) {
    throw ValidationError("paired_t_test: length mismatch (" + std::to_string(scores_a.size()) +
                          " vs " + std::to_string(scores_b.size()) + ")");
  }
  if (scores_a.size() < 2) throw ValidationError("paired_t_test: need at least 2 pairs");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("paired_t_test: alpha outside (0,1)");

  const std::size_t n = scores_a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = scores_a[i] - scores_b[i];

  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.df = n - 1;
  if (sd == 0.0) {
    if (mean == 0.0) return r;  // t = 0, p = 1
    r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    r.significant = true;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  r.significant = r.p_value < alpha;
  return r;
}

std::vector<std::string> map_labels(std::span<const std::string> pred, const LabelSchema& from,
                                    const LabelSchema& to) {
  for (const auto& p : pred) from.require(p);
  if (from == to) return {pred.begin(), pred.end()};

  const auto nli3 = LabelSchema::nli3();
  const auto nli2 = LabelSchema::nli2();
  auto same_classes = [](const LabelSchema& a, const LabelSchema& b) {
    if (a.size() != b.size()) return false;
    for (const auto& c : a.classes()) {
      if (!b.contains(c)) return false;
    }
    return true;
  };
  if (!same_classes(from, nli3) || !same_classes(to, nli2)) {
    throw ValidationError("map_labels: only 3-way NLI to 2-way NLI is defined (got '" +
                          from.name() + "' to '" + to.name() + "')");
  }
  std::vector<std::string> out;
  out.reserve(pred.size());
  for (const auto& p : pred) out.push_back(p == "entailment" ? "entailment" : "not_entailment");
  return out;
}

}  // namespace selftrain::metrics
