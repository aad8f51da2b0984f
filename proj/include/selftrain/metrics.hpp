// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "selftrain/datamodel.hpp"

namespace selftrain::metrics {

struct EvalReport {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::map<std::string, double> per_class_f1;
  std::size_t n = 0;

  Json to_json(const LabelSchema& schema) const;
};

/// Per-class F1 from confusion counts with 0/0 taken as 0; macro F1 is the
/// unweighted mean over every schema class, including classes absent from
/// both gold and pred.
EvalReport macro_f1(std::span<const std::string> gold, std::span<const std::string> pred,
                    const LabelSchema& schema);

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t df = 0;
  bool significant = false;
};

/// Two-sided paired t-test on a[i] - b[i].
TTestResult paired_t_test(std::span<const double> scores_a, std::span<const double> scores_b,
                          double alpha = 0.05);

/// Two-sided critical value of Student's t at the given alpha.
double t_critical(std::size_t df, double alpha);

/// 3-way NLI labels onto the 2-way schema: entailment stays, contradiction
/// and neutral become not_entailment. from == to is the identity.
std::vector<std::string> map_labels(std::span<const std::string> pred, const LabelSchema& from,
                                    const LabelSchema& to);

}  // namespace selftrain::metrics
