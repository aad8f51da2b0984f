// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "selftrain/backends.hpp"
#include "selftrain/datamodel.hpp"

namespace selftrain::generation {

/// Generation failed for a (premise, class) after the backend's retry budget.
class GenerationError : public BackendError {
 public:
  GenerationError(std::string premise_id, std::string cls, const std::string& what)
      : BackendError("generation failed for premise '" + premise_id + "', class '" + cls +
                     "': " + what),
        premise_id_(std::move(premise_id)),
        cls_(std::move(cls)) {}

  const std::string& premise_id() const { return premise_id_; }
  const std::string& cls() const { return cls_; }

 private:
  std::string premise_id_;
  std::string cls_;
};

/// Premise -> hypothesis pairs of class `cls`, in input order. Throws when the
/// class has no examples.
std::vector<GeneratorTrainingPair> build_generator_training_set(
    std::span<const LabeledExample> labeled, std::string_view cls, const LabelSchema& schema);

/// Source is the premise with the class name appended after one space.
std::vector<GeneratorTrainingPair> build_single_generator_training_set(
    std::span<const LabeledExample> labeled);

std::string single_mode_prompt(std::string_view premise, std::string_view cls);

enum class GeneratorMode { kPerClass, kSingle };

std::string_view to_string(GeneratorMode mode);
GeneratorMode generator_mode_from_string(std::string_view text);

struct GeneratorHandle {
  GeneratorBackend* backend = nullptr;
  std::string model_ref;
};

class GeneratorRegistry {
 public:
  /// Exactly one handle per schema class.
  static GeneratorRegistry per_class(LabelSchema schema,
                                     std::map<std::string, GeneratorHandle> handles);
  static GeneratorRegistry single(LabelSchema schema, GeneratorHandle handle);

  GeneratorMode mode() const { return mode_; }
  const LabelSchema& schema() const { return schema_; }
  const GeneratorHandle& handle_for(std::string_view cls) const;

 private:
  GeneratorRegistry(GeneratorMode mode, LabelSchema schema,
                    std::map<std::string, GeneratorHandle, std::less<>> handles)
      : mode_(mode), schema_(std::move(schema)), handles_(std::move(handles)) {}

  GeneratorMode mode_;
  LabelSchema schema_;
  std::map<std::string, GeneratorHandle, std::less<>> handles_;  // "" in single mode
};

/// Fine-tunes one generator per class (or a single class-conditioned one)
/// through the backend and returns the registry of trained model_refs.
GeneratorRegistry train_generators(std::span<const LabeledExample> labeled,
                                   const LabelSchema& schema, GeneratorMode mode,
                                   GeneratorBackend& backend, const DecodingConfig& decoding);

struct GenerationOptions {
  std::size_t batch_size = 256;
  /// Run the per-class streams on separate threads.
  bool concurrent = true;
};

/// |premises| x |C| records ordered by (class order, premise order). Each
/// class is one request stream. Any failure aborts the whole call.
std::vector<SyntheticExample> generate_synthetic_dataset(std::span<const UnlabeledPremise> premises,
                                                         const GeneratorRegistry& registry,
                                                         const DecodingConfig& decoding,
                                                         const GenerationOptions& options = {});

}  // namespace selftrain::generation
