// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

// Deterministic in-process stand-ins for the model services, over a toy
// "world" where sentences are sets of integer tokens and the NLI relation
// is decidable by an oracle:
//
//   premise        sorted distinct tokens from the lower half of the vocab
//   entailment     nonempty subset of the premise tokens
//   contradiction  tokens from the upper half only (disjoint from premise)
//   neutral        mix of premise tokens and fresh lower-half tokens

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "selftrain/backends.hpp"
#include "selftrain/datamodel.hpp"

namespace selftrain::sim {

struct SimWorld {
  int vocab_size = 200;
  int premise_length = 8;
  int entail_min_length = 1;
  int entail_max_length = 8;
  int contradiction_min_length = 1;
  int contradiction_max_length = 8;
  int neutral_min_length = 2;
  int neutral_max_length = 8;
  double neutral_premise_share = 0.5;
  /// Probability that a generator emits a hypothesis of a different class.
  double noise_rate = 0.3;
  std::uint64_t seed = 0;

  int lower_size() const { return vocab_size / 2; }
  /// Throws ValidationError when the parameters cannot produce the rules.
  void validate() const;
  Json to_json() const;
  static SimWorld from_json(const Json& j);
};

struct SimTask {
  std::vector<LabeledExample> labeled;
  std::vector<UnlabeledPremise> unlabeled;
  std::vector<LabeledExample> dev;
};

/// The simulated world speaks the 3-way NLI schema.
LabelSchema sim_schema();

SimTask sim_make_task(const SimWorld& world, std::size_t n_labeled, std::size_t m_unlabeled,
                      std::size_t n_dev);

/// Class-balanced labeled examples (round-robin over the schema). `stream`
/// separates independent sets drawn from the same world seed.
std::vector<LabeledExample> sim_labeled_set(const SimWorld& world, std::size_t n,
                                            std::string_view stream, std::string_view id_prefix);

std::vector<int> parse_tokens(const SimWorld& world, std::string_view text);
std::string render_tokens(const std::vector<int>& tokens);

std::string sim_oracle(const SimWorld& world, std::string_view premise,
                       std::string_view hypothesis);

/// A hypothesis the oracle assigns to `cls`, always.
std::string sim_clean_hypothesis(const SimWorld& world, std::string_view cls,
                                 const std::vector<int>& premise, Rng& rng);

/// With probability 1 - noise_rate a hypothesis of `cls`; otherwise one of a
/// different, uniformly chosen class.
std::string sim_generator(const SimWorld& world, std::string_view cls, std::string_view premise,
                          Rng& rng);

class SimGenerator : public GeneratorBackend {
 public:
  explicit SimGenerator(SimWorld world) : world_(std::move(world)) {}

  std::string train(std::span<const GeneratorTrainingPair> pairs, std::string_view cls,
                    const DecodingConfig& decoding) override;
  std::vector<std::string> generate(const std::string& model_ref,
                                    std::span<const std::string> prompts,
                                    const DecodingConfig& decoding) override;

 private:
  SimWorld world_;
  std::mutex mu_;
  std::map<std::string, std::string> bound_class_;  // model_ref -> class, "" = single
};

struct SimClassifierOptions {
  double smoothing = 1.0;
  /// Weight kept on the base model's counts when training continues from it.
  double retention = 0.5;
};

/// Count-based naive Bayes over binned interpretable features: fraction of
/// hypothesis tokens found in the premise, fraction in the upper vocabulary
/// half, and hypothesis/premise length ratio.
class SimClassifier : public ClassifierBackend {
 public:
  explicit SimClassifier(SimWorld world, SimClassifierOptions options = {});

  std::string train(TrainPhase phase, std::span<const TrainingRecord> records,
                    const std::optional<std::string>& base_ref, std::uint64_t seed) override;
  std::vector<ClassDistribution> predict(const std::string& model_ref,
                                         std::span<const TextPair> pairs) override;

  static constexpr std::size_t kOverlapBins = 6;
  static constexpr std::size_t kUpperBins = 3;
  static constexpr std::size_t kRatioBins = 8;

  struct Features {
    std::size_t overlap = 0;
    std::size_t upper = 0;
    std::size_t ratio = 0;
  };
  Features features(std::string_view premise, std::string_view hypothesis) const;

 private:
  struct Model {
    std::vector<double> class_counts;
    std::vector<std::vector<double>> overlap, upper, ratio;  // [class][bin]
  };

  Model fresh() const;

  SimWorld world_;
  SimClassifierOptions options_;
  LabelSchema schema_;
  std::mutex mu_;
  std::map<std::string, Model> models_;
};

/// Paraphrases by a seeded permutation of the whitespace tokens; the sim
/// oracle is order-insensitive, so labels survive.
class SimAugmenter : public AugmenterBackend {
 public:
  std::vector<std::optional<std::string>> paraphrase(std::span<const std::string> texts,
                                                     std::uint64_t seed) override;
};

/// Predicts seeded draws from a fixed vocabulary.
class SimMlm : public MlmBackend {
 public:
  explicit SimMlm(std::vector<std::string> vocabulary);
  static SimMlm for_world(const SimWorld& world);

  std::vector<std::vector<std::string>> fill(std::span<const std::string> texts,
                                             std::string_view mask_token,
                                             std::uint64_t seed) override;

 private:
  std::vector<std::string> vocabulary_;
};

}  // namespace selftrain::sim
