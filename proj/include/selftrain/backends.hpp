// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

// Narrow service interfaces for the model roles the engine talks to. Model
// state lives behind opaque model_ref strings; the engine never sees weights.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selftrain/datamodel.hpp"

namespace selftrain {

/// Classifier posterior over a schema, stored in schema order.
struct ClassDistribution {
  std::vector<double> probs;

  /// Throws ProtocolError unless there is one entry per class, each in
  /// [0,1], summing to 1 within `tolerance`.
  void validate(const LabelSchema& schema, double tolerance = 1e-6) const;
  /// Index of the largest probability; the earliest class wins ties.
  std::size_t argmax() const;

  /// Wire form: {"<class>": p, ...}. Missing or extra classes are protocol errors.
  static ClassDistribution from_json(const Json& j, const LabelSchema& schema);
  Json to_json(const LabelSchema& schema) const;
};

struct DecodingConfig {
  int top_k = 10;
  double temperature = 2.0;
  int max_length = 64;
  std::uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static DecodingConfig from_json(const Json& j);
};

struct GeneratorTrainingPair {
  std::string source;
  std::string target;
  std::string cls;

  bool operator==(const GeneratorTrainingPair&) const = default;
};

struct TextPair {
  std::string premise;
  std::string hypothesis;
};

struct TrainingRecord {
  std::string premise;
  std::string hypothesis;
  std::string label;

  bool operator==(const TrainingRecord&) const = default;
};

enum class TrainPhase { kCombined, kPseudo, kLabeled };

std::string_view to_string(TrainPhase phase);
TrainPhase phase_from_string(std::string_view text);

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  /// Fine-tunes a conditional generator on the pairs and returns its
  /// model_ref. `cls` is empty for a single generator conditioned on a
  /// class name appended to the source text.
  virtual std::string train(std::span<const GeneratorTrainingPair> pairs, std::string_view cls,
                            const DecodingConfig& decoding) = 0;

  /// One hypothesis per prompt, in prompt order.
  virtual std::vector<std::string> generate(const std::string& model_ref,
                                            std::span<const std::string> prompts,
                                            const DecodingConfig& decoding) = 0;
};

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  /// Trains and returns a new model_ref. With base_ref the training
  /// continues from that model (second phase of de-biased training);
  /// without it training starts from the pretrained initialization.
  virtual std::string train(TrainPhase phase, std::span<const TrainingRecord> records,
                            const std::optional<std::string>& base_ref, std::uint64_t seed) = 0;

  virtual std::vector<ClassDistribution> predict(const std::string& model_ref,
                                                 std::span<const TextPair> pairs) = 0;
};

class AugmenterBackend {
 public:
  virtual ~AugmenterBackend() = default;

  /// Paraphrase of each text; nullopt marks an item the backend failed on.
  virtual std::vector<std::optional<std::string>> paraphrase(std::span<const std::string> texts,
                                                             std::uint64_t seed) = 0;
};

class MlmBackend {
 public:
  virtual ~MlmBackend() = default;

  /// For each text, one predicted token per occurrence of mask_token, left
  /// to right.
  virtual std::vector<std::vector<std::string>> fill(std::span<const std::string> texts,
                                                     std::string_view mask_token,
                                                     std::uint64_t seed) = 0;
};

class SynonymLexicon {
 public:
  virtual ~SynonymLexicon() = default;
  virtual std::vector<std::string> synonyms(std::string_view token) const = 0;
};

/// Word -> synonyms table, loaded from a JSON object {"word": ["syn", ...]}.
class MapLexicon : public SynonymLexicon {
 public:
  MapLexicon() = default;
  explicit MapLexicon(std::map<std::string, std::vector<std::string>, std::less<>> table)
      : table_(std::move(table)) {}
  static MapLexicon load(const std::filesystem::path& path);

  std::vector<std::string> synonyms(std::string_view token) const override;

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> table_;
};

/// One classifier interaction, as seen by RecordingClassifier.
struct ClassifierCall {
  enum class Kind { kTrain, kPredict };
  Kind kind = Kind::kTrain;
  std::optional<TrainPhase> phase;
  std::size_t records = 0;
  std::optional<std::string> base_ref;
  std::string model_ref;
};

/// Decorator that forwards to another classifier and keeps a call log.
class RecordingClassifier : public ClassifierBackend {
 public:
  explicit RecordingClassifier(ClassifierBackend& inner) : inner_(inner) {}

  std::string train(TrainPhase phase, std::span<const TrainingRecord> records,
                    const std::optional<std::string>& base_ref, std::uint64_t seed) override;
  std::vector<ClassDistribution> predict(const std::string& model_ref,
                                         std::span<const TextPair> pairs) override;

  std::vector<ClassifierCall> calls() const;
  /// Training calls only, in order.
  std::vector<ClassifierCall> train_calls() const;
  void clear();

 private:
  ClassifierBackend& inner_;
  mutable std::mutex mu_;
  std::vector<ClassifierCall> calls_;
};

}  // namespace selftrain
