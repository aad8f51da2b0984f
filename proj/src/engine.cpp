// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/engine.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <unordered_map>
#include <unordered_set>

#include "selftrain/augment.hpp"

namespace selftrain::engine {

std::string_view to_string(Schedule s) { return s == Schedule::kVst ? "VST" : "DBST"; }

std::string_view to_string(FilterMode m) {
  return m == FilterMode::kDual ? "dual" : "confidence_only";
}

Schedule schedule_from_string(std::string_view text) {
  if (text == "VST" || text == "vst") return Schedule::kVst;
  if (text == "DBST" || text == "dbst") return Schedule::kDbst;
  throw ValidationError("unknown schedule '" + std::string(text) + "' (expected VST or DBST)");
}

FilterMode filter_mode_from_string(std::string_view text) {
  if (text == "dual") return FilterMode::kDual;
  if (text == "confidence_only") return FilterMode::kConfidenceOnly;
  throw ValidationError("unknown filter mode '" + std::string(text) +
                        "' (expected dual or confidence_only)");
}

std::size_t default_sample_size(std::size_t n_labeled) {
  return static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(n_labeled)));
}

SelfTrainConfig SelfTrainConfig::low_threshold_profile() {
  SelfTrainConfig c;
  c.tau = 0.7;
  return c;
}

void SelfTrainConfig::validate(const LabelSchema& schema) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError("tau must be in [0,1], got " + std::to_string(tau));
  }
  if (sample_size && *sample_size < schema.size()) {
    throw ValidationError("sample_size must be at least the number of classes (" +
                          std::to_string(schema.size()) + ")");
  }
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
}

std::size_t SelfTrainConfig::resolved_sample_size(std::size_t n_labeled) const {
  return sample_size.value_or(default_sample_size(n_labeled));
}

Json SelfTrainConfig::to_json() const {
  Json j;
  j["tau"] = tau;
  j["sample_size"] = sample_size ? Json(*sample_size) : Json(nullptr);
  j["max_iterations"] = max_iterations;
  j["patience"] = patience;
  j["schedule"] = std::string(to_string(schedule));
  j["filter_mode"] = std::string(to_string(filter_mode));
  j["noise"] = noise;
  j["seed"] = seed;
  return j;
}

SelfTrainConfig SelfTrainConfig::from_json(const Json& j) {
  SelfTrainConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ValidationError("selftrain config must be an object");
  try {
    if (j.contains("tau")) {
      if (!j["tau"].is_number()) throw ValidationError("tau must be a number");
      c.tau = j["tau"].get<double>();
    }
    if (j.contains("sample_size") && !j["sample_size"].is_null()) {
      if (!j["sample_size"].is_number_unsigned()) {
        throw ValidationError("sample_size must be a positive integer");
      }
      c.sample_size = j["sample_size"].get<std::size_t>();
    }
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.patience = j.value("patience", c.patience);
    if (j.contains("schedule")) c.schedule = schedule_from_string(j["schedule"].get<std::string>());
    if (j.contains("filter_mode")) {
      c.filter_mode = filter_mode_from_string(j["filter_mode"].get<std::string>());
    }
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("selftrain config: ") + e.what());
  }
  return c;
}

std::size_t IterationRecord::selected_total() const {
  std::size_t n = 0;
  for (const auto& [cls, count] : selected_per_class) n += count;
  return n;
}

Json IterationRecord::to_json(const LabelSchema& schema) const {
  Json j;
  j["k"] = k;
  j["sampled"] = sampled;
  Json per = Json::object();
  for (const auto& c : schema.classes()) {
    auto it = selected_per_class.find(c);
    per[c] = it == selected_per_class.end() ? 0 : it->second;
  }
  j["selected_per_class"] = per;
  j["dev_score"] = dev_score;
  j["classifier_ref"] = classifier_ref;
  Json calls = Json::array();
  for (const auto& c : train_calls) {
    calls.push_back({{"phase", std::string(selftrain::to_string(c.phase))}, {"records", c.records}});
  }
  j["train_calls"] = calls;
  j["pool_before"] = pool_before;
  j["pool_after"] = pool_after;
  j["pseudo_total"] = pseudo_total;
  j["noise_warnings"] = noise_warnings;
  return j;
}

IterationRecord IterationRecord::from_json(const Json& j) {
  IterationRecord r;
  try {
    r.k = j.at("k").get<int>();
    r.sampled = j.at("sampled").get<std::size_t>();
    for (auto it = j.at("selected_per_class").begin(); it != j.at("selected_per_class").end();
         ++it) {
      r.selected_per_class[it.key()] = it->get<std::size_t>();
    }
    r.dev_score = j.at("dev_score").get<double>();
    r.classifier_ref = j.at("classifier_ref").get<std::string>();
    for (const auto& c : j.at("train_calls")) {
      r.train_calls.push_back({phase_from_string(c.at("phase").get<std::string>()),
                               c.at("records").get<std::size_t>()});
    }
    r.pool_before = j.at("pool_before").get<std::size_t>();
    r.pool_after = j.at("pool_after").get<std::size_t>();
    r.pseudo_total = j.at("pseudo_total").get<std::size_t>();
    r.noise_warnings = j.value("noise_warnings", std::size_t{0});
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("iteration record: ") + e.what());
  } catch (const ProtocolError& e) {
    throw ValidationError(std::string("iteration record: ") + e.what());
  }
  if (r.dev_score < 0.0 || r.dev_score > 1.0) {
    throw ValidationError("iteration record: dev_score outside [0,1]");
  }
  return r;
}

RunState initial_state(SelfTrainConfig config, std::vector<SyntheticExample> synthetic) {
  RunState s;
  s.config = std::move(config);
  s.remaining = std::move(synthetic);
  return s;
}

// --- Steps ---------------------------------------------------------------------

std::vector<SyntheticExample> sample_balanced(std::span<const SyntheticExample> remaining,
                                              std::size_t sample_size, const LabelSchema& schema,
                                              Rng& rng) {
  if (sample_size < schema.size()) {
    throw ValidationError("sample size " + std::to_string(sample_size) +
                          " is smaller than the number of classes");
  }
  if (remaining.empty()) return {};

  std::size_t unlabeled = 0;
  for (const auto& ex : remaining) unlabeled += ex.synthetic_label ? 0 : 1;
  if (unlabeled != 0 && unlabeled != remaining.size()) {
    throw ValidationError("pool mixes synthetically labeled and unlabeled candidates");
  }

  auto take = [&](const std::vector<std::size_t>& pool, std::size_t quota,
                  std::vector<SyntheticExample>& out) {
    auto picks = rng.sample_indices(pool.size(), std::min(quota, pool.size()));
    std::sort(picks.begin(), picks.end());
    for (auto p : picks) out.push_back(remaining[pool[p]]);
  };

  std::vector<SyntheticExample> batch;
  if (unlabeled != 0) {
    std::vector<std::size_t> all(remaining.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(all, sample_size, batch);
    return batch;
  }

  std::vector<std::vector<std::size_t>> by_class(schema.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    by_class[schema.require(*remaining[i].synthetic_label)].push_back(i);
  }
  const std::size_t base = sample_size / schema.size();
  const std::size_t extra = sample_size % schema.size();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    take(by_class[c], base + (c < extra ? 1 : 0), batch);
  }
  return batch;
}

std::vector<Prediction> assign_pseudo_labels(std::span<const SyntheticExample> batch,
                                             ClassifierBackend& classifier,
                                             const std::string& model_ref,
                                             const LabelSchema& schema) {
  if (batch.empty()) return {};
  std::vector<TextPair> pairs;
  pairs.reserve(batch.size());
  for (const auto& ex : batch) pairs.push_back({ex.premise, ex.hypothesis});
  auto dists = classifier.predict(model_ref, pairs);
  if (dists.size() != batch.size()) {
    throw ProtocolError("classifier returned " + std::to_string(dists.size()) +
                        " distributions for " + std::to_string(batch.size()) + " pairs");
  }
  std::vector<Prediction> out;
  out.reserve(dists.size());
  for (const auto& d : dists) {
    d.validate(schema);
    auto best = d.argmax();
    out.push_back({schema.at(best), d.probs[best]});
  }
  return out;
}

std::vector<PseudoLabeledExample> select(std::span<const SyntheticExample> batch,
                                         std::span<const Prediction> predictions,
                                         const SelfTrainConfig& config, int iteration) {
  if (batch.size() != predictions.size()) {
    throw ValidationError("select: predictions are not aligned with the batch");
  }
  std::vector<PseudoLabeledExample> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const auto& pred = predictions[i];
    if (pred.confidence < config.tau) continue;
    std::string stored;
    if (config.filter_mode == FilterMode::kDual) {
      if (!ex.synthetic_label) {
        throw ValidationError("dual filtering needs a synthetic label on '" + ex.id + "'");
      }
      if (*ex.synthetic_label != pred.label) continue;
      stored = *ex.synthetic_label;
    } else {
      stored = pred.label;
    }
    out.push_back({ex, std::move(stored), pred.confidence, iteration, false});
  }
  return out;
}

RunState accumulate(RunState state, std::span<const PseudoLabeledExample> selected) {
  if (selected.empty()) return state;
  std::unordered_set<std::string> accumulated;
  for (const auto& p : state.pseudo_labeled) accumulated.insert(p.id());
  std::unordered_set<std::string> incoming;
  for (const auto& s : selected) {
    if (accumulated.contains(s.id())) {
      throw StateError("example '" + s.id() + "' was already pseudo-labeled");
    }
    if (!incoming.insert(s.id()).second) {
      throw StateError("example '" + s.id() + "' selected twice in one batch");
    }
  }
  std::size_t found = 0;
  for (const auto& ex : state.remaining) found += incoming.contains(ex.id) ? 1 : 0;
  if (found != incoming.size()) {
    throw StateError("selected examples are not all in the remaining pool");
  }
  std::erase_if(state.remaining, [&](const SyntheticExample& ex) { return incoming.contains(ex.id); });
  state.pseudo_labeled.insert(state.pseudo_labeled.end(), selected.begin(), selected.end());
  return state;
}

namespace {

std::vector<TrainingRecord> labeled_records(std::span<const LabeledExample> labeled) {
  std::vector<TrainingRecord> out;
  out.reserve(labeled.size());
  for (const auto& ex : labeled) out.push_back({ex.premise, ex.hypothesis, ex.label});
  return out;
}

std::vector<TrainingRecord> pseudo_records(std::span<const PseudoLabeledExample> pseudo) {
  std::vector<TrainingRecord> out;
  out.reserve(pseudo.size());
  for (const auto& ex : pseudo) out.push_back({ex.base.premise, ex.base.hypothesis, ex.pseudo_label});
  return out;
}

}  // namespace

TrainStepResult train_step(Schedule schedule, std::span<const LabeledExample> labeled,
                           std::span<const PseudoLabeledExample> pseudo,
                           ClassifierBackend& classifier, std::uint64_t seed) {
  if (labeled.empty()) throw ValidationError("training needs a non-empty labeled set");
  TrainStepResult result;
  if (schedule == Schedule::kVst) {
    auto records = labeled_records(labeled);
    auto extra = pseudo_records(pseudo);
    records.insert(records.end(), extra.begin(), extra.end());
    Rng rng(derive_seed(seed, "combined"));
    rng.shuffle(records);
    result.model_ref = classifier.train(TrainPhase::kCombined, records, std::nullopt, seed);
    result.calls.push_back({TrainPhase::kCombined, records.size()});
    return result;
  }

  std::optional<std::string> base;
  if (!pseudo.empty()) {
    auto records = pseudo_records(pseudo);
    Rng rng(derive_seed(seed, "pseudo"));
    rng.shuffle(records);
    base = classifier.train(TrainPhase::kPseudo, records, std::nullopt, seed);
    result.calls.push_back({TrainPhase::kPseudo, records.size()});
  }
  auto records = labeled_records(labeled);
  Rng rng(derive_seed(seed, "labeled"));
  rng.shuffle(records);
  result.model_ref = classifier.train(TrainPhase::kLabeled, records, base, seed);
  result.calls.push_back({TrainPhase::kLabeled, records.size()});
  return result;
}

metrics::EvalReport evaluate(ClassifierBackend& classifier, const std::string& model_ref,
                             std::span<const LabeledExample> dev, const LabelSchema& schema) {
  std::vector<TextPair> pairs;
  std::vector<std::string> gold;
  pairs.reserve(dev.size());
  gold.reserve(dev.size());
  for (const auto& ex : dev) {
    pairs.push_back({ex.premise, ex.hypothesis});
    gold.push_back(ex.label);
  }
  auto dists = classifier.predict(model_ref, pairs);
  if (dists.size() != dev.size()) {
    throw ProtocolError("classifier returned " + std::to_string(dists.size()) +
                        " distributions for " + std::to_string(dev.size()) + " dev pairs");
  }
  std::vector<std::string> pred;
  pred.reserve(dists.size());
  for (const auto& d : dists) {
    d.validate(schema);
    pred.push_back(schema.at(d.argmax()));
  }
  return metrics::macro_f1(gold, pred, schema);
}

std::optional<int> best_iteration(std::span<const IterationRecord> history) {
  std::optional<int> best;
  double best_score = 0.0;
  for (const auto& r : history) {
    if (!best || r.dev_score > best_score) {
      best = r.k;
      best_score = r.dev_score;
    }
  }
  return best;
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kRunning:
      return "running";
    case StopReason::kMaxIterations:
      return "max_iterations";
    case StopReason::kPoolExhausted:
      return "pool_exhausted";
    case StopReason::kPatience:
      return "patience";
    case StopReason::kEmptyPoolAtStart:
      return "empty_pool_at_start";
  }
  return "running";
}

StopReason stop_reason(const RunState& state) {
  if (state.history.empty()) {
    return state.remaining.empty() ? StopReason::kEmptyPoolAtStart : StopReason::kRunning;
  }
  const int k = state.iteration();
  if (k >= state.config.max_iterations) return StopReason::kMaxIterations;
  if (state.remaining.empty()) return StopReason::kPoolExhausted;
  if (state.best_iteration && k - *state.best_iteration >= state.config.patience) {
    return StopReason::kPatience;
  }
  return StopReason::kRunning;
}

// --- Loop ----------------------------------------------------------------------

namespace {

void persist(const RunOptions& options, const RunState& state, const LabelSchema& schema) {
  if (!options.state_dir) return;
  write_file_atomic(state_file(*options.state_dir, state.iteration()),
                    serialize_state(state, schema));
}

void fill_best(RunResult& result) {
  const auto& h = result.state.history;
  if (!result.state.best_iteration) return;
  for (const auto& r : h) {
    if (r.k == *result.state.best_iteration) {
      result.best_classifier_ref = r.classifier_ref;
      result.best_dev_score = r.dev_score;
    }
  }
}

}  // namespace

RunResult run(std::span<const LabeledExample> labeled, std::vector<SyntheticExample> synthetic,
              std::span<const LabeledExample> dev, const SelfTrainConfig& config,
              const LabelSchema& schema, const EngineBackends& backends,
              const RunOptions& options) {
  return resume(initial_state(config, std::move(synthetic)), labeled, dev, schema, backends,
                options);
}

RunResult resume(RunState state, std::span<const LabeledExample> labeled,
                 std::span<const LabeledExample> dev, const LabelSchema& schema,
                 const EngineBackends& backends, const RunOptions& options) {
  const auto& config = state.config;
  config.validate(schema);
  if (labeled.empty()) throw ValidationError("labeled set is empty");
  if (dev.empty()) throw ValidationError("dev set is empty");
  for (const auto& ex : dev) schema.require(ex.label);
  if (config.noise && backends.augmenter == nullptr) {
    throw ValidationError("noised self-training needs an augmenter backend");
  }
  if (config.filter_mode == FilterMode::kDual) {
    for (const auto& ex : state.remaining) {
      if (!ex.synthetic_label) {
        throw ValidationError("dual filtering needs synthetic labels; '" + ex.id +
                              "' has none (use confidence_only)");
      }
    }
  }
  const std::size_t sample_size = config.resolved_sample_size(labeled.size());
  if (sample_size < schema.size()) {
    throw ValidationError("sample size " + std::to_string(sample_size) +
                          " is smaller than the number of classes");
  }

  RunResult result;
  if (state.history.empty() && state.remaining.empty()) {
    // Nothing to self-train on: plain supervised training on the labeled set.
    auto records = labeled_records(labeled);
    auto ref = backends.classifier.train(TrainPhase::kCombined, records, std::nullopt,
                                         derive_seed(config.seed, "train", 0));
    result.best_dev_score = evaluate(backends.classifier, ref, dev, schema).macro_f1;
    result.best_classifier_ref = std::move(ref);
    result.stop = StopReason::kEmptyPoolAtStart;
    result.state = std::move(state);
    persist(options, result.state, schema);
    return result;
  }
  if (state.history.empty()) persist(options, state, schema);

  while (stop_reason(state) == StopReason::kRunning) {
    const int k = state.iteration() + 1;
    IterationRecord rec;
    rec.k = k;
    rec.pool_before = state.remaining.size();

    auto trained = train_step(config.schedule, labeled, state.pseudo_labeled, backends.classifier,
                              derive_seed(config.seed, "train", k));
    rec.train_calls = trained.calls;
    rec.classifier_ref = trained.model_ref;

    Rng rng(derive_seed(config.seed, "sample", k));
    auto batch = sample_balanced(state.remaining, sample_size, schema, rng);
    rec.sampled = batch.size();
    auto predictions = assign_pseudo_labels(batch, backends.classifier, trained.model_ref, schema);
    auto selected = select(batch, predictions, config, k);
    if (config.noise) {
      auto noised = augment::noise_pseudo_labeled(selected, *backends.augmenter,
                                                  derive_seed(config.seed, "noise", k));
      selected = std::move(noised.examples);
      rec.noise_warnings = noised.warnings;
    }
    for (const auto& c : schema.classes()) rec.selected_per_class[c] = 0;
    for (const auto& s : selected) ++rec.selected_per_class[s.pseudo_label];

    RunState next = accumulate(state, selected);
    rec.pool_after = next.remaining.size();
    rec.pseudo_total = next.pseudo_labeled.size();
    rec.dev_score = evaluate(backends.classifier, trained.model_ref, dev, schema).macro_f1;

    next.history.push_back(std::move(rec));
    next.best_iteration = best_iteration(next.history);
    persist(options, next, schema);
    state = std::move(next);
    if (options.on_iteration) options.on_iteration(state);
    if (options.halt_after && k >= *options.halt_after) break;
  }

  result.stop = stop_reason(state);
  result.state = std::move(state);
  fill_best(result);
  return result;
}

// --- Persistence ---------------------------------------------------------------

std::string serialize_state(const RunState& state, const LabelSchema& schema) {
  std::string out;
  auto emit = [&out](const Json& j) {
    out += j.dump();
    out += '\n';
  };
  Json header;
  header["section"] = "header";
  header["format"] = 1;
  header["iteration"] = state.iteration();
  header["best_iteration"] = state.best_iteration ? Json(*state.best_iteration) : Json(nullptr);
  header["schema"] = schema.to_json();
  header["config"] = state.config.to_json();
  header["counts"] = {{"history", state.history.size()},
                      {"pseudo", state.pseudo_labeled.size()},
                      {"remaining", state.remaining.size()}};
  emit(header);
  for (const auto& r : state.history) emit({{"section", "history"}, {"record", r.to_json(schema)}});
  for (const auto& p : state.pseudo_labeled) emit({{"section", "pseudo"}, {"record", to_json(p)}});
  for (const auto& s : state.remaining) emit({{"section", "remaining"}, {"record", to_json(s)}});
  return out;
}

RunState parse_state(const std::filesystem::path& path, const LabelSchema& schema) {
  RunState state;
  bool have_header = false;
  Json counts;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    const std::string where = path.filename().string() + ":" + std::to_string(line);
    const std::string section = j.value("section", std::string());
    if (section == "header") {
      if (j.value("format", 0) != 1) throw ValidationError(where + ": unsupported state format");
      if (LabelSchema::from_json(j.at("schema")) != schema) {
        throw ValidationError(where + ": state was written under a different label schema");
      }
      state.config = SelfTrainConfig::from_json(j.at("config"));
      if (!j.at("best_iteration").is_null()) state.best_iteration = j["best_iteration"].get<int>();
      counts = j.at("counts");
      have_header = true;
      return;
    }
    if (!have_header) throw ValidationError(where + ": state file lacks a header");
    if (section == "history") {
      state.history.push_back(IterationRecord::from_json(j.at("record")));
    } else if (section == "pseudo") {
      state.pseudo_labeled.push_back(pseudo_from_json(j.at("record"), schema, where));
    } else if (section == "remaining") {
      state.remaining.push_back(synthetic_from_json(j.at("record"), schema, where));
    } else {
      throw ValidationError(where + ": unknown section '" + section + "'");
    }
  });
  if (!have_header) throw ValidationError(path.string() + ": empty state file");
  if (counts.value("history", std::size_t{0}) != state.history.size() ||
      counts.value("pseudo", std::size_t{0}) != state.pseudo_labeled.size() ||
      counts.value("remaining", std::size_t{0}) != state.remaining.size()) {
    throw ValidationError(path.string() + ": truncated state file");
  }
  return state;
}

std::filesystem::path state_file(const std::filesystem::path& state_dir, int k) {
  return state_dir / ("iter_" + std::to_string(k) + ".jsonl");
}

std::optional<int> latest_state(const std::filesystem::path& state_dir) {
  if (!std::filesystem::is_directory(state_dir)) return std::nullopt;
  static const std::regex pattern(R"(iter_(\d+)\.jsonl)");
  std::optional<int> latest;
  for (const auto& entry : std::filesystem::directory_iterator(state_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      int k = std::stoi(m[1].str());
      if (!latest || k > *latest) latest = k;
    }
  }
  return latest;
}

std::string metrics_csv(const RunState& state, const LabelSchema& schema) {
  std::string out = "k,sampled";
  for (const auto& c : schema.classes()) out += ",selected_" + c;
  out += ",selected_total,pool_after,pseudo_total,noise_warnings,dev_macro_f1,train_phases,"
         "classifier_ref\n";
  for (const auto& r : state.history) {
    out += std::to_string(r.k) + "," + std::to_string(r.sampled);
    for (const auto& c : schema.classes()) {
      auto it = r.selected_per_class.find(c);
      out += "," + std::to_string(it == r.selected_per_class.end() ? 0 : it->second);
    }
    std::string phases;
    for (const auto& call : r.train_calls) {
      if (!phases.empty()) phases += '+';
      phases += selftrain::to_string(call.phase);
    }
    out += "," + std::to_string(r.selected_total()) + "," + std::to_string(r.pool_after) + "," +
           std::to_string(r.pseudo_total) + "," + std::to_string(r.noise_warnings) + "," +
           Json(r.dev_score).dump() + "," + phases + "," + r.classifier_ref + "\n";
  }
  return out;
}

}  // namespace selftrain::engine
