// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "fakes.hpp"
#include "oracles.hpp"
#include "selftrain/engine.hpp"
#include "selftrain/sim.hpp"

using namespace selftrain;
using namespace selftrain::engine;
namespace fs = std::filesystem;

namespace {

/// Forwards to another classifier; the train call numbered `fail_at_train`
/// raises a BackendError.
class FailingClassifier : public ClassifierBackend {
 public:
  FailingClassifier(ClassifierBackend& inner, int fail_at_train) : inner_(inner), fail_at_(fail_at_train) {}
  std::string train(TrainPhase phase, std::span<const TrainingRecord> records,
                    const std::optional<std::string>& base_ref, std::uint64_t seed) override {
    if (++trains_ == fail_at_) throw BackendError("injected failure");
    return inner_.train(phase, records, base_ref, seed);
  }
  std::vector<ClassDistribution> predict(const std::string& ref, std::span<const TextPair> pairs) override {
    return inner_.predict(ref, pairs);
  }

 private:
  ClassifierBackend& inner_;
  int fail_at_;
  int trains_ = 0;
};

struct SimSetup {
  sim::SimWorld world;
  sim::SimTask task = sim::sim_make_task(world, 15, 40, 30);
  std::vector<SyntheticExample> synthetic;

  SimSetup() {
    sim::SimGenerator gen(world);
    Rng rng(1);
    const auto schema = sim::sim_schema();
    for (const auto& u : task.unlabeled) {
      for (const auto& c : schema.classes()) {
        SyntheticExample ex{synthetic_id(u.id, c), u.id, u.premise,
                            sim::sim_generator(world, c, u.premise, rng), c, "sim", Json::object()};
        synthetic.push_back(ex);
      }
    }
  }
};

SelfTrainConfig small_config() {
  SelfTrainConfig c;
  c.max_iterations = 4;
  c.seed = 9;
  return c;
}

SyntheticExample candidate(const std::string& id, std::optional<std::string> label) {
  return {id, id, "p " + id, "h " + id, std::move(label), "g", {}};
}

}  // namespace

TEST_CASE("config validation and names") {
  const auto s = LabelSchema::nli3();
  SelfTrainConfig c;
  c.tau = 1.2;
  CHECK_THROWS_AS(c.validate(s), ValidationError);
  c.tau = -0.1;
  CHECK_THROWS_AS(c.validate(s), ValidationError);
  c.tau = 0.0;
  CHECK_NOTHROW(c.validate(s));
  c.sample_size = 2;
  CHECK_THROWS_AS(c.validate(s), ValidationError);
  c.sample_size.reset();
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(s), ValidationError);

  CHECK(SelfTrainConfig::low_threshold_profile().tau == 0.7);
  CHECK(default_sample_size(15) == 11);
  CHECK(default_sample_size(100) == 75);
  CHECK(schedule_from_string(to_string(Schedule::kVst)) == Schedule::kVst);
  CHECK(filter_mode_from_string(to_string(FilterMode::kConfidenceOnly)) == FilterMode::kConfidenceOnly);
  CHECK_THROWS_AS(schedule_from_string("XST"), ValidationError);

  SelfTrainConfig full = small_config();
  full.sample_size = 12;
  full.noise = true;
  CHECK(SelfTrainConfig::from_json(full.to_json()) == full);
}

TEST_CASE("select matches the brute-force filter") {
  const auto s = LabelSchema::nli3();
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SyntheticExample> batch;
    std::vector<Prediction> preds;
    std::vector<oracle::FilterItem> items;
    for (int i = 0; i < 12; ++i) {
      auto syn = s.at(rng.below(3));
      auto pl = s.at(rng.below(3));
      double conf = rng.below(4) == 0 ? 0.9 : rng.uniform();
      batch.push_back(candidate("x" + std::to_string(i), syn));
      preds.push_back({pl, conf});
      items.push_back({batch.back().id, syn, pl, conf});
    }
    for (auto mode : {FilterMode::kDual, FilterMode::kConfidenceOnly}) {
      SelfTrainConfig c;
      c.tau = 0.9;
      c.filter_mode = mode;
      std::set<std::pair<std::string, std::string>> got;
      for (const auto& p : select(batch, preds, c, 3)) {
        got.insert({p.id(), p.pseudo_label});
        CHECK(p.iteration_selected == 3);
      }
      CHECK(got == oracle::brute_force_filter(items, 0.9, mode == FilterMode::kDual));
    }
  }
}

TEST_CASE("select input errors") {
  SelfTrainConfig c;
  std::vector<SyntheticExample> batch = {candidate("a", std::nullopt)};
  std::vector<Prediction> preds = {{"entailment", 0.95}};
  CHECK_THROWS_AS(select(batch, preds, c, 1), ValidationError);
  c.filter_mode = FilterMode::kConfidenceOnly;
  CHECK(select(batch, preds, c, 1).size() == 1);
  CHECK_THROWS_AS(select(batch, {}, c, 1), ValidationError);
}

TEST_CASE("accumulate moves items and rejects repeats") {
  auto state = initial_state({}, {candidate("a", "entailment"), candidate("b", "neutral")});
  PseudoLabeledExample pa{state.remaining[0], "entailment", 0.95, 1, false};
  auto next = accumulate(state, std::vector{pa});
  CHECK(next.remaining.size() == 1);
  CHECK(next.remaining[0].id == "b");
  CHECK(next.pseudo_labeled.size() == 1);
  CHECK_THROWS_AS(accumulate(next, std::vector{pa}), StateError);
  CHECK_THROWS_AS(accumulate(state, std::vector{pa, pa}), StateError);
  PseudoLabeledExample ghost{candidate("zz", "neutral"), "neutral", 0.95, 1, false};
  CHECK_THROWS_AS(accumulate(state, std::vector{ghost}), StateError);
  CHECK(accumulate(state, std::vector<PseudoLabeledExample>{}) == state);
}

TEST_CASE("balanced sampling quotas without backfill") {
  const auto s = LabelSchema::nli3();
  auto pool = fakes::scripted_pool(s, 5);
  Rng rng(1);
  auto batch = sample_balanced(pool, 8, s, rng);  // quotas 3,3,2
  auto st = stats(std::span<const SyntheticExample>(batch), s);
  CHECK(st.count("entailment") == 3);
  CHECK(st.count("contradiction") == 3);
  CHECK(st.count("neutral") == 2);

  std::vector<SyntheticExample> skewed(pool.begin(), pool.begin() + 6);  // 5 e, 1 c
  Rng rng2(1);
  CHECK(sample_balanced(skewed, 9, s, rng2).size() == 4);
}

TEST_CASE("empty pool at start trains one supervised baseline") {
  const auto s = LabelSchema::nli3();
  auto dev = fakes::scripted_dev(s, 6);
  fakes::ScriptedClassifier scripted(s, dev, {6});
  RecordingClassifier rec(scripted);
  std::vector<LabeledExample> labeled = {{"l", "p", "h", "neutral", {}}, {"m", "p", "h", "entailment", {}},
                                         {"n", "p", "h", "contradiction", {}}, {"o", "p", "h", "neutral", {}}};
  auto r = run(labeled, {}, dev, small_config(), s, {rec});
  CHECK(r.stop == StopReason::kEmptyPoolAtStart);
  CHECK(r.state.history.empty());
  CHECK(r.best_dev_score == 1.0);
  REQUIRE(rec.train_calls().size() == 1);
  CHECK(rec.train_calls()[0].phase == TrainPhase::kCombined);
  CHECK(rec.train_calls()[0].records == 4);
}

TEST_CASE("run preconditions") {
  SimSetup sim;
  const auto s = sim::sim_schema();
  sim::SimClassifier clf(sim.world);
  auto cfg = small_config();
  CHECK_THROWS_AS(run({}, sim.synthetic, sim.task.dev, cfg, s, {clf}), ValidationError);
  CHECK_THROWS_AS(run(sim.task.labeled, sim.synthetic, {}, cfg, s, {clf}), ValidationError);
  cfg.noise = true;
  CHECK_THROWS_AS(run(sim.task.labeled, sim.synthetic, sim.task.dev, cfg, s, {clf}), ValidationError);
  cfg.noise = false;
  auto unlabeled = sim.synthetic;
  unlabeled[4].synthetic_label.reset();
  CHECK_THROWS_AS(run(sim.task.labeled, unlabeled, sim.task.dev, cfg, s, {clf}), ValidationError);
  cfg.tau = 2.0;
  CHECK_THROWS_AS(run(sim.task.labeled, sim.synthetic, sim.task.dev, cfg, s, {clf}), ValidationError);
}

TEST_CASE("state files round-trip and detect truncation") {
  SimSetup sim;
  const auto s = sim::sim_schema();
  sim::SimClassifier clf(sim.world);
  auto dir = fakes::temp_dir("engine-state");
  RunOptions opts;
  opts.state_dir = dir;
  auto r = run(sim.task.labeled, sim.synthetic, sim.task.dev, small_config(), s, {clf}, opts);
  REQUIRE(latest_state(dir) == r.state.iteration());
  CHECK(fs::exists(state_file(dir, 0)));
  auto loaded = parse_state(state_file(dir, r.state.iteration()), s);
  CHECK(loaded == r.state);
  CHECK(serialize_state(loaded, s) == fakes::read_file(state_file(dir, r.state.iteration())));

  auto text = fakes::read_file(state_file(dir, r.state.iteration()));
  auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  fakes::write_file(dir / "cut.jsonl", cut);
  CHECK_THROWS_AS(parse_state(dir / "cut.jsonl", s), ValidationError);
  CHECK_THROWS_AS(parse_state(state_file(dir, 0), LabelSchema::nli2()), ValidationError);
  fakes::write_file(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(parse_state(dir / "empty.jsonl", s), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("a backend failure leaves the persisted state at the last finished iteration") {
  SimSetup sim;
  const auto s = sim::sim_schema();
  auto dir = fakes::temp_dir("engine-fail");
  sim::SimClassifier inner(sim.world);
  // DBST: iteration 1 trains once (no pseudo data yet), later iterations twice.
  FailingClassifier failing(inner, 4);
  RunOptions opts;
  opts.state_dir = dir;
  int seen = 0;
  opts.on_iteration = [&](const RunState& st) { seen = st.iteration(); };
  CHECK_THROWS_AS(run(sim.task.labeled, sim.synthetic, sim.task.dev, small_config(), s, {failing}, opts),
                  BackendError);
  CHECK(seen == 2);
  CHECK(latest_state(dir) == 2);

  sim::SimClassifier fresh(sim.world);
  auto resumed = resume(parse_state(state_file(dir, 2), s), sim.task.labeled, sim.task.dev, s, {fresh});
  sim::SimClassifier straight_clf(sim.world);
  auto straight = run(sim.task.labeled, sim.synthetic, sim.task.dev, small_config(), s, {straight_clf});
  CHECK(resumed.state.pseudo_labeled == straight.state.pseudo_labeled);
  CHECK(resumed.state.history.size() == straight.state.history.size());
  fs::remove_all(dir);
}

TEST_CASE("DBST and VST issue the documented training calls") {
  SimSetup sim;
  const auto s = sim::sim_schema();
  for (auto schedule : {Schedule::kDbst, Schedule::kVst}) {
    sim::SimClassifier inner(sim.world);
    RecordingClassifier rec(inner);
    auto cfg = small_config();
    cfg.schedule = schedule;
    cfg.tau = 0.5;
    auto r = run(sim.task.labeled, sim.synthetic, sim.task.dev, cfg, s, {rec});
    REQUIRE(r.state.history.size() >= 2);
    const auto& second = r.state.history[1];
    if (schedule == Schedule::kVst) {
      REQUIRE(second.train_calls.size() == 1);
      CHECK(second.train_calls[0].phase == TrainPhase::kCombined);
      CHECK(second.train_calls[0].records == 15 + r.state.history[0].pseudo_total);
    } else {
      REQUIRE(second.train_calls.size() == 2);
      CHECK(second.train_calls[0].phase == TrainPhase::kPseudo);
      CHECK(second.train_calls[0].records == r.state.history[0].pseudo_total);
      CHECK(second.train_calls[1].phase == TrainPhase::kLabeled);
      CHECK(second.train_calls[1].records == 15);
    }
    std::vector<double> scores;
    for (const auto& h : r.state.history) scores.push_back(h.dev_score);
    CHECK(r.state.best_iteration == oracle::first_argmax(scores));
  }
}

TEST_CASE("metrics csv has one row per iteration") {
  SimSetup sim;
  const auto s = sim::sim_schema();
  sim::SimClassifier clf(sim.world);
  auto r = run(sim.task.labeled, sim.synthetic, sim.task.dev, small_config(), s, {clf});
  auto csv = metrics_csv(r.state, s);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.state.history.size()) + 1);
  CHECK(csv.rfind("k,sampled,selected_entailment", 0) == 0);
}
