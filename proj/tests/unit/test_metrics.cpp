// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "selftrain/common.hpp"
#include "selftrain/metrics.hpp"

using namespace selftrain;
using Labels = std::vector<std::string>;

TEST_CASE("macro F1 on a hand-worked example") {
  // entailment 2/3, contradiction 1/2, neutral 0
  Labels gold = {"entailment", "entailment", "contradiction", "neutral"};
  Labels pred = {"entailment", "contradiction", "contradiction", "contradiction"};
  auto r = metrics::macro_f1(gold, pred, LabelSchema::nli3());
  CHECK(r.macro_f1 == doctest::Approx(7.0 / 18.0));
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.per_class_f1["neutral"] == 0.0);
  CHECK(r.n == 4);
}

TEST_CASE("macro F1 averages over classes absent from gold and pred") {
  Labels gold = {"entailment", "entailment"};
  auto r = metrics::macro_f1(gold, gold, LabelSchema::nli3());
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0));
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("macro F1 agrees with the counting oracle") {
  const auto schema = LabelSchema::nli3();
  Labels classes(schema.classes().begin(), schema.classes().end());
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.between(1, 40));
    Labels gold, pred;
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(classes[rng.below(3)]);
      pred.push_back(classes[rng.below(3)]);
    }
    CHECK(metrics::macro_f1(gold, pred, schema).macro_f1 ==
          doctest::Approx(oracle::counting_macro_f1(gold, pred, classes)).epsilon(1e-12));
  }
}

TEST_CASE("macro F1 input errors") {
  Labels one = {"entailment"};
  Labels two = {"entailment", "neutral"};
  Labels bad = {"maybe"};
  CHECK_THROWS_AS(metrics::macro_f1(one, two, LabelSchema::nli3()), ValidationError);
  CHECK_THROWS_AS(metrics::macro_f1(one, bad, LabelSchema::nli3()), ValidationError);
  CHECK(metrics::macro_f1(Labels{}, Labels{}, LabelSchema::nli3()).macro_f1 == 0.0);
}

TEST_CASE("map_labels") {
  Labels pred = {"entailment", "contradiction", "neutral"};
  auto out = metrics::map_labels(pred, LabelSchema::nli3(), LabelSchema::nli2());
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < pred.size(); ++i) CHECK(out[i] == oracle::to_two_way(pred[i]));
  CHECK(metrics::map_labels(pred, LabelSchema::nli3(), LabelSchema::nli3()) == pred);
  Labels two = {"not_entailment"};
  CHECK_THROWS_AS(metrics::map_labels(two, LabelSchema::nli2(), LabelSchema::nli3()), ValidationError);
  Labels wrong = {"not_entailment"};
  CHECK_THROWS_AS(metrics::map_labels(wrong, LabelSchema::nli3(), LabelSchema::nli2()), ValidationError);
}

TEST_CASE("paired t-test against the closed form for df = 2") {
  // With 2 degrees of freedom the two-sided p-value is 1 - |t| / sqrt(t^2 + 2).
  std::vector<double> a = {0.5, 0.6, 0.7}, b = {0.4, 0.4, 0.6};
  auto r = metrics::paired_t_test(a, b);
  CHECK(r.df == 2);
  CHECK(r.t == doctest::Approx(4.0));
  CHECK(r.t == doctest::Approx(oracle::paired_t(a, b)));
  CHECK(r.p_value == doctest::Approx(1.0 - 4.0 / std::sqrt(18.0)).epsilon(1e-9));
  CHECK_FALSE(r.significant);
  CHECK(metrics::paired_t_test(a, b, 0.1).significant);
}

TEST_CASE("paired t-test edge cases") {
  std::vector<double> a = {0.5, 0.5, 0.5};
  auto same = metrics::paired_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p_value == 1.0);
  CHECK_FALSE(same.significant);

  std::vector<double> shifted = {0.6, 0.6, 0.6};
  auto constant = metrics::paired_t_test(shifted, a);
  CHECK(std::isinf(constant.t));
  CHECK(constant.t > 0);
  CHECK(constant.significant);

  std::vector<double> one = {0.1};
  CHECK_THROWS_AS(metrics::paired_t_test(one, one), ValidationError);
  CHECK_THROWS_AS(metrics::paired_t_test(a, shifted, 1.5), ValidationError);
  std::vector<double> two = {0.1, 0.2};
  CHECK_THROWS_AS(metrics::paired_t_test(a, two), ValidationError);
}

TEST_CASE("t critical values match printed tables") {
  for (const auto& [df, value] : oracle::t_table_005()) {
    CHECK(metrics::t_critical(static_cast<std::size_t>(df), 0.05) == doctest::Approx(value).epsilon(5e-4));
  }
  CHECK_THROWS_AS(metrics::t_critical(0, 0.05), ValidationError);
}
