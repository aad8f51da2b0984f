// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/backends.hpp"

#include <cmath>
#include <fstream>

namespace selftrain {

void ClassDistribution::validate(const LabelSchema& schema, double tolerance) const {
  if (probs.size() != schema.size()) {
    throw ProtocolError("class distribution has " + std::to_string(probs.size()) +
                        " entries, schema has " + std::to_string(schema.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw ProtocolError("probability for '" + schema.at(i) + "' outside [0,1]: " +
                          std::to_string(p));
    }
    sum += p;
  }
  if (std::fabs(sum - 1.0) > tolerance) {
    throw ProtocolError("class distribution sums to " + std::to_string(sum) + ", not 1");
  }
}

std::size_t ClassDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

ClassDistribution ClassDistribution::from_json(const Json& j, const LabelSchema& schema) {
  if (!j.is_object()) throw ProtocolError("class distribution must be an object");
  if (j.size() != schema.size()) {
    throw ProtocolError("class distribution " + j.dump() + " does not cover the schema classes");
  }
  ClassDistribution d;
  d.probs.resize(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    auto it = j.find(schema.at(i));
    if (it == j.end() || !it->is_number()) {
      throw ProtocolError("class distribution " + j.dump() + " lacks a number for '" +
                          schema.at(i) + "'");
    }
    d.probs[i] = it->get<double>();
  }
  return d;
}

Json ClassDistribution::to_json(const LabelSchema& schema) const {
  Json j = Json::object();
  for (std::size_t i = 0; i < schema.size(); ++i) j[schema.at(i)] = probs.at(i);
  return j;
}

void DecodingConfig::validate() const {
  if (top_k < 1) throw ValidationError("decoding.top_k must be >= 1");
  if (!(temperature > 0.0)) throw ValidationError("decoding.temperature must be > 0");
  if (max_length < 1) throw ValidationError("decoding.max_length must be >= 1");
}

Json DecodingConfig::to_json() const {
  Json j;
  j["top_k"] = top_k;
  j["temperature"] = temperature;
  j["max_length"] = max_length;
  j["seed"] = seed;
  return j;
}

DecodingConfig DecodingConfig::from_json(const Json& j) {
  DecodingConfig d;
  if (j.is_null()) return d;
  if (!j.is_object()) throw ValidationError("decoding must be an object");
  try {
    d.top_k = j.value("top_k", d.top_k);
    d.temperature = j.value("temperature", d.temperature);
    d.max_length = j.value("max_length", d.max_length);
    d.seed = j.value("seed", d.seed);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("decoding: ") + e.what());
  }
  d.validate();
  return d;
}

std::string_view to_string(TrainPhase phase) {
  switch (phase) {
    case TrainPhase::kCombined:
      return "combined";
    case TrainPhase::kPseudo:
      return "pseudo";
    case TrainPhase::kLabeled:
      return "labeled";
  }
  return "combined";
}

TrainPhase phase_from_string(std::string_view text) {
  if (text == "combined") return TrainPhase::kCombined;
  if (text == "pseudo") return TrainPhase::kPseudo;
  if (text == "labeled") return TrainPhase::kLabeled;
  throw ProtocolError("unknown training phase '" + std::string(text) + "'");
}

MapLexicon MapLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open lexicon " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError("lexicon " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("lexicon must be a JSON object of word -> [synonyms]");
  std::map<std::string, std::vector<std::string>, std::less<>> table;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_array()) throw ValidationError("lexicon entry '" + it.key() + "' is not an array");
    auto& syns = table[it.key()];
    for (const auto& s : *it) {
      if (!s.is_string()) throw ValidationError("lexicon entry '" + it.key() + "' has a non-string");
      syns.push_back(s.get<std::string>());
    }
  }
  return MapLexicon(std::move(table));
}

std::vector<std::string> MapLexicon::synonyms(std::string_view token) const {
  auto it = table_.find(token);
  if (it == table_.end()) return {};
  return it->second;
}

std::string RecordingClassifier::train(TrainPhase phase, std::span<const TrainingRecord> records,
                                       const std::optional<std::string>& base_ref,
                                       std::uint64_t seed) {
  auto ref = inner_.train(phase, records, base_ref, seed);
  std::lock_guard lock(mu_);
  calls_.push_back({ClassifierCall::Kind::kTrain, phase, records.size(), base_ref, ref});
  return ref;
}

std::vector<ClassDistribution> RecordingClassifier::predict(const std::string& model_ref,
                                                            std::span<const TextPair> pairs) {
  auto out = inner_.predict(model_ref, pairs);
  std::lock_guard lock(mu_);
  calls_.push_back({ClassifierCall::Kind::kPredict, std::nullopt, pairs.size(), std::nullopt,
                    model_ref});
  return out;
}

std::vector<ClassifierCall> RecordingClassifier::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::vector<ClassifierCall> RecordingClassifier::train_calls() const {
  std::lock_guard lock(mu_);
  std::vector<ClassifierCall> out;
  for (const auto& c : calls_) {
    if (c.kind == ClassifierCall::Kind::kTrain) out.push_back(c);
  }
  return out;
}

void RecordingClassifier::clear() {
  std::lock_guard lock(mu_);
  calls_.clear();
}

}  // namespace selftrain
