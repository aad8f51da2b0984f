// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

// Iterative self-training over a synthetic candidate pool:
//
//   train classifier -> sample balanced batch -> pseudo-label -> filter
//   -> (noise) -> accumulate -> evaluate on dev
//
// until the iteration cap, an empty pool, or `patience` iterations without a
// dev improvement. The loop is a deterministic state machine; every random
// draw is derived from (seed, iteration), so a resumed run replays exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selftrain/backends.hpp"
#include "selftrain/datamodel.hpp"
#include "selftrain/metrics.hpp"

namespace selftrain::engine {

enum class Schedule { kVst, kDbst };
enum class FilterMode { kDual, kConfidenceOnly };

std::string_view to_string(Schedule s);
std::string_view to_string(FilterMode m);
Schedule schedule_from_string(std::string_view text);
FilterMode filter_mode_from_string(std::string_view text);

/// S defaults to round(0.75 * n) for n labeled examples.
std::size_t default_sample_size(std::size_t n_labeled);

struct SelfTrainConfig {
  double tau = 0.9;
  std::optional<std::size_t> sample_size;
  int max_iterations = 100;
  int patience = 10;
  Schedule schedule = Schedule::kDbst;
  FilterMode filter_mode = FilterMode::kDual;
  bool noise = false;
  std::uint64_t seed = 0;

  /// tau = 0.7, for small 2-way sets where 0.9 admits almost nothing.
  static SelfTrainConfig low_threshold_profile();

  void validate(const LabelSchema& schema) const;
  std::size_t resolved_sample_size(std::size_t n_labeled) const;
  Json to_json() const;
  static SelfTrainConfig from_json(const Json& j);

  bool operator==(const SelfTrainConfig&) const = default;
};

struct Prediction {
  std::string label;
  double confidence = 0.0;
};

struct TrainCallRecord {
  TrainPhase phase = TrainPhase::kCombined;
  std::size_t records = 0;

  bool operator==(const TrainCallRecord&) const = default;
};

struct IterationRecord {
  int k = 0;
  std::size_t sampled = 0;
  std::map<std::string, std::size_t> selected_per_class;
  double dev_score = 0.0;
  std::string classifier_ref;
  std::vector<TrainCallRecord> train_calls;
  std::size_t pool_before = 0;
  std::size_t pool_after = 0;
  std::size_t pseudo_total = 0;
  std::size_t noise_warnings = 0;

  std::size_t selected_total() const;
  Json to_json(const LabelSchema& schema) const;
  static IterationRecord from_json(const Json& j);
  bool operator==(const IterationRecord&) const = default;
};

struct RunState {
  SelfTrainConfig config;
  std::vector<SyntheticExample> remaining;
  std::vector<PseudoLabeledExample> pseudo_labeled;
  std::vector<IterationRecord> history;
  std::optional<int> best_iteration;

  int iteration() const { return history.empty() ? 0 : history.back().k; }
  bool operator==(const RunState&) const = default;
};

RunState initial_state(SelfTrainConfig config, std::vector<SyntheticExample> synthetic);

/// Per-class quota floor(S/|C|), remainder one each to the earliest classes;
/// each class contributes min(quota, available) drawn without replacement,
/// with no backfilling. Pools without synthetic labels are sampled uniformly.
std::vector<SyntheticExample> sample_balanced(std::span<const SyntheticExample> remaining,
                                              std::size_t sample_size, const LabelSchema& schema,
                                              Rng& rng);

/// Argmax label (schema order breaks ties) and its probability.
std::vector<Prediction> assign_pseudo_labels(std::span<const SyntheticExample> batch,
                                             ClassifierBackend& classifier,
                                             const std::string& model_ref,
                                             const LabelSchema& schema);

/// Dual: keep iff synthetic == pseudo label and confidence >= tau; the stored
/// label is the synthetic one. Confidence-only: keep iff confidence >= tau;
/// the stored label is the pseudo label.
std::vector<PseudoLabeledExample> select(std::span<const SyntheticExample> batch,
                                         std::span<const Prediction> predictions,
                                         const SelfTrainConfig& config, int iteration);

/// Moves `selected` from the pool into the pseudo-labeled set.
RunState accumulate(RunState state, std::span<const PseudoLabeledExample> selected);

struct TrainStepResult {
  std::string model_ref;
  std::vector<TrainCallRecord> calls;
};

/// VST: one combined call on shuffled labeled + pseudo. DBST: a pseudo phase
/// (skipped when there is no pseudo data) then a labeled phase continuing
/// from it.
TrainStepResult train_step(Schedule schedule, std::span<const LabeledExample> labeled,
                           std::span<const PseudoLabeledExample> pseudo,
                           ClassifierBackend& classifier, std::uint64_t seed);

metrics::EvalReport evaluate(ClassifierBackend& classifier, const std::string& model_ref,
                             std::span<const LabeledExample> dev, const LabelSchema& schema);

/// Highest dev score; the earliest iteration wins ties.
std::optional<int> best_iteration(std::span<const IterationRecord> history);

enum class StopReason { kRunning, kMaxIterations, kPoolExhausted, kPatience, kEmptyPoolAtStart };
std::string_view to_string(StopReason r);

/// Why a run in this state must stop, or kRunning.
StopReason stop_reason(const RunState& state);

struct EngineBackends {
  ClassifierBackend& classifier;
  AugmenterBackend* augmenter = nullptr;
};

struct RunOptions {
  /// When set, the full state is written to <dir>/iter_<k>.jsonl after
  /// iteration k (and iter_0 before the first).
  std::optional<std::filesystem::path> state_dir;
  std::function<void(const RunState&)> on_iteration;
  /// Return after this iteration as if interrupted.
  std::optional<int> halt_after;
};

struct RunResult {
  RunState state;
  StopReason stop = StopReason::kRunning;
  std::string best_classifier_ref;
  double best_dev_score = 0.0;
};

RunResult run(std::span<const LabeledExample> labeled, std::vector<SyntheticExample> synthetic,
              std::span<const LabeledExample> dev, const SelfTrainConfig& config,
              const LabelSchema& schema, const EngineBackends& backends,
              const RunOptions& options = {});

/// Continues a run from a persisted or in-memory state.
RunResult resume(RunState state, std::span<const LabeledExample> labeled,
                 std::span<const LabeledExample> dev, const LabelSchema& schema,
                 const EngineBackends& backends, const RunOptions& options = {});

// --- Persistence -------------------------------------------------------------

std::string serialize_state(const RunState& state, const LabelSchema& schema);
RunState parse_state(const std::filesystem::path& path, const LabelSchema& schema);
std::filesystem::path state_file(const std::filesystem::path& state_dir, int k);
/// Highest k with a state file, if any.
std::optional<int> latest_state(const std::filesystem::path& state_dir);

std::string metrics_csv(const RunState& state, const LabelSchema& schema);

}  // namespace selftrain::engine
