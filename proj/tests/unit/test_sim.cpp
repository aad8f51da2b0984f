// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <numeric>

#include "doctest.h"
#include "selftrain/metrics.hpp"
#include "selftrain/sim.hpp"

using namespace selftrain;

TEST_CASE("oracle examples") {
  sim::SimWorld w;
  CHECK(sim::sim_oracle(w, "1 2 3", "2 3") == "entailment");
  CHECK(sim::sim_oracle(w, "1 2 3", "3 1 2") == "entailment");
  CHECK(sim::sim_oracle(w, "1 2 3", "150 151") == "contradiction");
  CHECK(sim::sim_oracle(w, "1 2 3", "2 40") == "neutral");
  CHECK(sim::sim_oracle(w, "1 2 3", "40") == "neutral");
  CHECK(sim::sim_oracle(w, "1 2 3", "2 150") == "neutral");
  CHECK_THROWS_AS(sim::sim_oracle(w, "1 2 3", "two"), ValidationError);
  CHECK_THROWS_AS(sim::sim_oracle(w, "1 2 3", "200"), ValidationError);
  CHECK_THROWS_AS(sim::sim_oracle(w, "", "1"), ValidationError);
}

TEST_CASE("clean hypotheses always satisfy the oracle") {
  sim::SimWorld w;
  Rng rng(3);
  std::vector<int> premise = {3, 9, 14, 20, 31, 47, 52, 88};
  const auto text = sim::render_tokens(premise);
  const auto schema = sim::sim_schema();
  for (int i = 0; i < 300; ++i) {
    for (const auto& c : schema.classes()) {
      CHECK(sim::sim_oracle(w, text, sim::sim_clean_hypothesis(w, c, premise, rng)) == c);
    }
  }
}

TEST_CASE("generator agreement tracks the noise rate") {
  auto agreement = [](double rho, int n) {
    sim::SimWorld w;
    w.noise_rate = rho;
    Rng rng(17);
    const auto schema = sim::sim_schema();
    int agree = 0;
    for (int i = 0; i < n; ++i) {
      const auto& cls = schema.at(static_cast<std::size_t>(i) % 3);
      if (sim::sim_oracle(w, "1 2 3 4 5 6 7 8", sim::sim_generator(w, cls, "1 2 3 4 5 6 7 8", rng)) == cls) {
        ++agree;
      }
    }
    return double(agree) / n;
  };
  CHECK(agreement(0.0, 3000) == 1.0);
  CHECK(agreement(0.3, 10000) == doctest::Approx(0.70).epsilon(0.02 / 0.70));
  CHECK(agreement(1.0, 3000) == 0.0);
}

TEST_CASE("classifier learns the clean world") {
  sim::SimWorld w;
  auto train = sim::sim_labeled_set(w, 300, "train", "t-");
  auto dev = sim::sim_labeled_set(w, 150, "dev", "d-");
  std::vector<TrainingRecord> records;
  for (const auto& ex : train) records.push_back({ex.premise, ex.hypothesis, ex.label});
  sim::SimClassifier clf(w);
  auto ref = clf.train(TrainPhase::kCombined, records, std::nullopt, 1);

  std::vector<TextPair> pairs;
  std::vector<std::string> gold, pred;
  for (const auto& ex : dev) {
    pairs.push_back({ex.premise, ex.hypothesis});
    gold.push_back(ex.label);
  }
  const auto schema = sim::sim_schema();
  for (const auto& d : clf.predict(ref, pairs)) {
    double sum = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
    CHECK(sum == doctest::Approx(1.0));
    d.validate(schema);
    pred.push_back(schema.at(d.argmax()));
  }
  CHECK(metrics::macro_f1(gold, pred, schema).accuracy >= 0.9);

  CHECK_THROWS_AS(clf.predict("never-trained", pairs), BackendError);
  CHECK_THROWS_AS(clf.train(TrainPhase::kLabeled, records, std::string("missing"), 1), BackendError);
  CHECK_THROWS_AS(clf.train(TrainPhase::kCombined, {}, std::nullopt, 1), BackendError);
}

TEST_CASE("labeled sets are balanced and reproducible") {
  sim::SimWorld w;
  auto set = sim::sim_labeled_set(w, 9, "train", "l-");
  const auto schema = sim::sim_schema();
  auto s = stats(std::span<const LabeledExample>(set), schema);
  for (const auto& c : schema.classes()) CHECK(s.count(c) == 3);
  CHECK(set == sim::sim_labeled_set(w, 9, "train", "l-"));
  CHECK(set != sim::sim_labeled_set(w, 9, "dev", "l-"));
  for (const auto& ex : set) CHECK(sim::sim_oracle(w, ex.premise, ex.hypothesis) == ex.label);
}

TEST_CASE("world validation") {
  sim::SimWorld w;
  w.vocab_size = 10;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  CHECK_THROWS_AS(sim::sim_make_task(w, 3, 3, 3), ValidationError);
  sim::SimWorld noisy;
  noisy.noise_rate = 1.5;
  CHECK_THROWS_AS(noisy.validate(), ValidationError);
  sim::SimWorld ok;
  CHECK_THROWS_AS(sim::sim_make_task(ok, 0, 3, 3), ValidationError);
  CHECK(sim::SimWorld::from_json(ok.to_json()).to_json() == ok.to_json());
}

TEST_CASE("generator single mode reads the class suffix") {
  sim::SimWorld w;
  w.noise_rate = 0.0;
  sim::SimGenerator gen(w);
  std::vector<GeneratorTrainingPair> pairs = {{"1 2", "1", "entailment"}};
  DecodingConfig dec;
  auto single = gen.train(pairs, "", dec);
  std::vector<std::string> prompts = {"1 2 3 contradiction"};
  auto out = gen.generate(single, prompts, dec);
  CHECK(sim::sim_oracle(w, "1 2 3", out.at(0)) == "contradiction");
  CHECK(out == gen.generate(single, prompts, dec));
  std::vector<std::string> bare = {"1"};
  CHECK_THROWS_AS(gen.generate(single, bare, dec), BackendError);
  CHECK_THROWS_AS(gen.generate("nope", prompts, dec), BackendError);
}

TEST_CASE("augmenter keeps labels and mlm fills every mask") {
  sim::SimWorld w;
  sim::SimAugmenter aug;
  std::vector<std::string> texts = {"1 2 3", "  "};
  auto out = aug.paraphrase(texts, 5);
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].has_value());
  CHECK(sim::sim_oracle(w, "1 2 3", *out[0]) == "entailment");
  CHECK(sim::sim_oracle(w, *out[0], "1 2 3") == "entailment");

  auto mlm = sim::SimMlm::for_world(w);
  std::vector<std::string> masked = {"1 <mask> 3 <mask>", "none"};
  auto fills = mlm.fill(masked, "<mask>", 9);
  CHECK(fills.at(0).size() == 2);
  CHECK(fills.at(1).empty());
  CHECK(fills == mlm.fill(masked, "<mask>", 9));
}
