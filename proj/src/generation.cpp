// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/generation.hpp"

#include <exception>
#include <future>

namespace selftrain::generation {

std::vector<GeneratorTrainingPair> build_generator_training_set(
    std::span<const LabeledExample> labeled, std::string_view cls, const LabelSchema& schema) {
  schema.require(cls);
  std::vector<GeneratorTrainingPair> pairs;
  for (const auto& ex : labeled) {
    if (ex.label == cls) pairs.push_back({ex.premise, ex.hypothesis, ex.label});
  }
  if (pairs.empty()) {
    throw ValidationError("no labeled examples of class '" + std::string(cls) +
                          "' to fine-tune a generator on");
  }
  return pairs;
}

std::string single_mode_prompt(std::string_view premise, std::string_view cls) {
  std::string prompt(premise);
  prompt += ' ';
  prompt += cls;
  return prompt;
}

std::vector<GeneratorTrainingPair> build_single_generator_training_set(
    std::span<const LabeledExample> labeled) {
  if (labeled.empty()) throw ValidationError("cannot fine-tune a generator on an empty set");
  std::vector<GeneratorTrainingPair> pairs;
  pairs.reserve(labeled.size());
  for (const auto& ex : labeled) {
    pairs.push_back({single_mode_prompt(ex.premise, ex.label), ex.hypothesis, ex.label});
  }
  return pairs;
}

std::string_view to_string(GeneratorMode mode) {
  return mode == GeneratorMode::kSingle ? "single" : "per_class";
}

GeneratorMode generator_mode_from_string(std::string_view text) {
  if (text == "per_class" || text == "per-class") return GeneratorMode::kPerClass;
  if (text == "single") return GeneratorMode::kSingle;
  throw ValidationError("unknown generator mode '" + std::string(text) + "'");
}

GeneratorRegistry GeneratorRegistry::per_class(LabelSchema schema,
                                               std::map<std::string, GeneratorHandle> handles) {
  if (handles.size() != schema.size()) {
    throw ValidationError("per-class generator registry needs one handle per class");
  }
  std::map<std::string, GeneratorHandle, std::less<>> checked;
  for (auto& [cls, handle] : handles) {
    schema.require(cls);
    if (handle.backend == nullptr) throw ValidationError("generator for '" + cls + "' is null");
    checked.emplace(cls, std::move(handle));
  }
  return GeneratorRegistry(GeneratorMode::kPerClass, std::move(schema), std::move(checked));
}

GeneratorRegistry GeneratorRegistry::single(LabelSchema schema, GeneratorHandle handle) {
  if (handle.backend == nullptr) throw ValidationError("single generator is null");
  std::map<std::string, GeneratorHandle, std::less<>> handles;
  handles.emplace("", std::move(handle));
  return GeneratorRegistry(GeneratorMode::kSingle, std::move(schema), std::move(handles));
}

const GeneratorHandle& GeneratorRegistry::handle_for(std::string_view cls) const {
  schema_.require(cls);
  auto it = handles_.find(mode_ == GeneratorMode::kSingle ? std::string_view() : cls);
  if (it == handles_.end()) throw ValidationError("no generator for '" + std::string(cls) + "'");
  return it->second;
}

GeneratorRegistry train_generators(std::span<const LabeledExample> labeled,
                                   const LabelSchema& schema, GeneratorMode mode,
                                   GeneratorBackend& backend, const DecodingConfig& decoding) {
  decoding.validate();
  if (mode == GeneratorMode::kSingle) {
    auto pairs = build_single_generator_training_set(labeled);
    return GeneratorRegistry::single(schema, {&backend, backend.train(pairs, "", decoding)});
  }
  std::map<std::string, GeneratorHandle> handles;
  for (const auto& cls : schema.classes()) {
    auto pairs = build_generator_training_set(labeled, cls, schema);
    handles[cls] = {&backend, backend.train(pairs, cls, decoding)};
  }
  return GeneratorRegistry::per_class(schema, std::move(handles));
}

namespace {

std::vector<SyntheticExample> generate_class(std::span<const UnlabeledPremise> premises,
                                             const GeneratorRegistry& registry,
                                             const std::string& cls,
                                             const DecodingConfig& decoding,
                                             std::size_t batch_size) {
  const auto& handle = registry.handle_for(cls);
  const bool single = registry.mode() == GeneratorMode::kSingle;
  std::vector<SyntheticExample> out;
  out.reserve(premises.size());
  for (std::size_t start = 0; start < premises.size(); start += batch_size) {
    const std::size_t end = std::min(premises.size(), start + batch_size);
    std::vector<std::string> prompts;
    prompts.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      prompts.push_back(single ? single_mode_prompt(premises[i].premise, cls)
                               : premises[i].premise);
    }
    std::vector<std::string> hyps;
    try {
      hyps = handle.backend->generate(handle.model_ref, prompts, decoding);
    } catch (const std::exception& e) {
      throw GenerationError(premises[start].id, cls, e.what());
    }
    if (hyps.size() != prompts.size()) {
      throw GenerationError(premises[start].id, cls,
                            "backend returned " + std::to_string(hyps.size()) +
                                " hypotheses for " + std::to_string(prompts.size()) + " prompts");
    }
    for (std::size_t i = start; i < end; ++i) {
      std::string hyp = trim(hyps[i - start]);
      if (hyp.empty()) throw GenerationError(premises[i].id, cls, "empty hypothesis");
      SyntheticExample ex;
      ex.id = synthetic_id(premises[i].id, cls);
      ex.premise_id = premises[i].id;
      ex.premise = premises[i].premise;
      ex.hypothesis = std::move(hyp);
      ex.synthetic_label = cls;
      ex.generator_id = handle.model_ref;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace

std::vector<SyntheticExample> generate_synthetic_dataset(std::span<const UnlabeledPremise> premises,
                                                         const GeneratorRegistry& registry,
                                                         const DecodingConfig& decoding,
                                                         const GenerationOptions& options) {
  decoding.validate();
  if (options.batch_size == 0) throw ValidationError("generation batch size must be positive");
  const auto& schema = registry.schema();

  std::vector<std::vector<SyntheticExample>> per_class(schema.size());
  if (options.concurrent && schema.size() > 1 && !premises.empty()) {
    std::vector<std::future<std::vector<SyntheticExample>>> streams;
    for (const auto& cls : schema.classes()) {
      streams.push_back(std::async(std::launch::async, [&, cls] {
        return generate_class(premises, registry, cls, decoding, options.batch_size);
      }));
    }
    // Wait for every stream, then report the first failure in class order.
    std::exception_ptr first_error;
    for (std::size_t c = 0; c < streams.size(); ++c) {
      try {
        per_class[c] = streams[c].get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      per_class[c] = generate_class(premises, registry, schema.at(c), decoding, options.batch_size);
    }
  }

  std::vector<SyntheticExample> out;
  out.reserve(premises.size() * schema.size());
  for (auto& chunk : per_class) {
    std::move(chunk.begin(), chunk.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace selftrain::generation
