// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace selftrain::augment {

NoiseResult noise_pseudo_labeled(std::span<const PseudoLabeledExample> selected,
                                 AugmenterBackend& augmenter, std::uint64_t seed) {
  NoiseResult result;
  result.examples.assign(selected.begin(), selected.end());
  if (selected.empty()) return result;

  std::vector<std::string> texts;
  texts.reserve(selected.size() * 2);
  for (const auto& ex : selected) {
    texts.push_back(ex.base.premise);
    texts.push_back(ex.base.hypothesis);
  }

  std::vector<std::optional<std::string>> outputs;
  try {
    outputs = augmenter.paraphrase(texts, seed);
  } catch (const std::exception&) {
    outputs.clear();
  }
  if (outputs.size() != texts.size()) outputs.assign(texts.size(), std::nullopt);

  for (std::size_t i = 0; i < result.examples.size(); ++i) {
    auto& premise = outputs[2 * i];
    auto& hypothesis = outputs[2 * i + 1];
    std::string p = premise ? trim(*premise) : std::string();
    std::string h = hypothesis ? trim(*hypothesis) : std::string();
    if (p.empty() || h.empty()) {
      ++result.warnings;
      continue;
    }
    auto& ex = result.examples[i];
    ex.base.premise = std::move(p);
    ex.base.hypothesis = std::move(h);
    ex.noised = true;
  }
  return result;
}

std::vector<LabeledExample> bt_augment_labeled(std::span<const LabeledExample> labeled,
                                               AugmenterBackend& augmenter, std::uint64_t seed) {
  if (labeled.empty()) throw ValidationError("back-translation needs a non-empty labeled set");
  std::vector<std::string> texts;
  texts.reserve(labeled.size() * 2);
  for (const auto& ex : labeled) {
    texts.push_back(ex.premise);
    texts.push_back(ex.hypothesis);
  }
  auto outputs = augmenter.paraphrase(texts, seed);
  if (outputs.size() != texts.size()) {
    throw BackendError("augmenter returned " + std::to_string(outputs.size()) + " outputs for " +
                       std::to_string(texts.size()) + " texts");
  }
  std::vector<LabeledExample> out(labeled.begin(), labeled.end());
  out.reserve(labeled.size() * 2);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto& p = outputs[2 * i];
    const auto& h = outputs[2 * i + 1];
    if (!p || !h || trim(*p).empty() || trim(*h).empty()) {
      throw BackendError("augmenter failed on example '" + labeled[i].id + "'");
    }
    LabeledExample copy = labeled[i];
    copy.id += "#bt";
    copy.premise = trim(*p);
    copy.hypothesis = trim(*h);
    out.push_back(std::move(copy));
  }
  return out;
}

namespace {

std::string replace_synonyms(std::string_view text, const SynonymLexicon& lexicon, double rate,
                             Rng& rng) {
  auto tokens = split_whitespace(text);
  if (tokens.empty()) return std::string(text);
  // The epsilon keeps products like 0.1 * 30 from rounding up to 4.
  const auto quota =
      static_cast<std::size_t>(std::ceil(rate * static_cast<double>(tokens.size()) - 1e-9));
  std::vector<std::size_t> order(tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t replaced = 0;
  bool changed = false;
  for (std::size_t pos : order) {
    if (replaced == quota) break;
    auto syns = lexicon.synonyms(tokens[pos]);
    if (syns.empty()) continue;
    tokens[pos] = syns[rng.below(syns.size())];
    ++replaced;
    changed = true;
  }
  return changed ? join(tokens, " ") : std::string(text);
}

}  // namespace

LabeledExample synonym_replace(const LabeledExample& example, const SynonymLexicon& lexicon,
                               double rate, Rng& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("synonym rate must be in (0,1]");
  LabeledExample out = example;
  out.premise = replace_synonyms(example.premise, lexicon, rate, rng);
  out.hypothesis = replace_synonyms(example.hypothesis, lexicon, rate, rng);
  return out;
}

std::vector<LabeledExample> sr_augment_labeled(std::span<const LabeledExample> labeled,
                                               const SynonymLexicon& lexicon, double rate,
                                               std::uint64_t seed) {
  if (labeled.empty()) throw ValidationError("synonym replacement needs a non-empty labeled set");
  std::vector<LabeledExample> out(labeled.begin(), labeled.end());
  out.reserve(labeled.size() * 2);
  for (const auto& ex : labeled) {
    Rng rng(derive_seed(seed, "sr", ex.id));
    auto copy = synonym_replace(ex, lexicon, rate, rng);
    copy.id += "#sr";
    out.push_back(std::move(copy));
  }
  return out;
}

std::string cmlm_template(std::string_view premise, std::string_view hypothesis,
                          std::string_view label, const LabelSchema& schema) {
  for (auto c : {"entailment", "contradiction", "neutral"}) {
    if (schema.size() != 3 || !schema.contains(c)) {
      throw ValidationError("C-MLM templates are defined for the 3-way NLI schema only");
    }
  }
  schema.require(label);
  std::string connective;
  if (label == "entailment") {
    connective = " implies ";
  } else if (label == "contradiction") {
    connective = " contradicts ";
  } else {
    connective = " neither implies nor contradicts ";
  }
  std::string out(premise);
  out += connective;
  out += hypothesis;
  out += '.';
  return out;
}

MaskedPair cmlm_mask_common(std::string_view premise, std::string_view hypothesis, Rng& rng) {
  MaskedPair masked;
  masked.premise_tokens = split_whitespace(premise);
  masked.hypothesis_tokens = split_whitespace(hypothesis);

  const std::set<std::string> hyp_types(masked.hypothesis_tokens.begin(),
                                        masked.hypothesis_tokens.end());
  std::vector<std::string> common;
  std::set<std::string> seen;
  for (const auto& tok : masked.premise_tokens) {
    if (hyp_types.contains(tok) && seen.insert(tok).second) common.push_back(tok);
  }
  if (common.empty()) return masked;

  const std::size_t count = std::max<std::size_t>(1, common.size() / 2);
  auto picks = rng.sample_indices(common.size(), count);
  std::sort(picks.begin(), picks.end());
  for (auto idx : picks) {
    SharedMask group;
    group.original = common[idx];
    for (std::size_t i = 0; i < masked.premise_tokens.size(); ++i) {
      if (masked.premise_tokens[i] == group.original) group.premise_positions.push_back(i);
    }
    for (std::size_t i = 0; i < masked.hypothesis_tokens.size(); ++i) {
      if (masked.hypothesis_tokens[i] == group.original) group.hypothesis_positions.push_back(i);
    }
    masked.shared_masks.push_back(std::move(group));
  }
  for (const auto& group : masked.shared_masks) {
    for (auto i : group.premise_positions) masked.premise_tokens[i] = std::string(kMaskToken);
    for (auto i : group.hypothesis_positions) masked.hypothesis_tokens[i] = std::string(kMaskToken);
  }
  return masked;
}

std::pair<std::string, std::string> cmlm_fill(const MaskedPair& masked, std::string_view label,
                                              const LabelSchema& schema, MlmBackend& mlm,
                                              std::uint64_t seed) {
  auto premise_tokens = masked.premise_tokens;
  auto hypothesis_tokens = masked.hypothesis_tokens;
  if (masked.shared_masks.empty()) {
    return {join(premise_tokens, " "), join(hypothesis_tokens, " ")};
  }

  // Mask occurrences in template order: premise first, then hypothesis.
  std::vector<std::size_t> premise_slots, hypothesis_slots;
  for (std::size_t i = 0; i < premise_tokens.size(); ++i) {
    if (premise_tokens[i].find(kMaskToken) != std::string::npos) {
      if (premise_tokens[i] != kMaskToken) {
        throw ValidationError("premise already contains the mask marker");
      }
      premise_slots.push_back(i);
    }
  }
  for (std::size_t i = 0; i < hypothesis_tokens.size(); ++i) {
    if (hypothesis_tokens[i].find(kMaskToken) != std::string::npos) {
      if (hypothesis_tokens[i] != kMaskToken) {
        throw ValidationError("hypothesis already contains the mask marker");
      }
      hypothesis_slots.push_back(i);
    }
  }

  const std::string text =
      cmlm_template(join(premise_tokens, " "), join(hypothesis_tokens, " "), label, schema);
  std::vector<std::string> texts{text};
  auto predictions = mlm.fill(texts, kMaskToken, seed);
  const std::size_t expected = premise_slots.size() + hypothesis_slots.size();
  if (predictions.size() != 1 || predictions[0].size() != expected) {
    throw ProtocolError("masked LM returned the wrong number of predictions (expected " +
                        std::to_string(expected) + ")");
  }
  const auto& pred = predictions[0];

  auto slot_of = [](const std::vector<std::size_t>& slots, std::size_t pos) {
    return static_cast<std::size_t>(std::find(slots.begin(), slots.end(), pos) - slots.begin());
  };
  for (const auto& group : masked.shared_masks) {
    std::string token;
    if (!group.premise_positions.empty()) {
      token = pred[slot_of(premise_slots, group.premise_positions.front())];
    } else if (!group.hypothesis_positions.empty()) {
      token = pred[premise_slots.size() +
                   slot_of(hypothesis_slots, group.hypothesis_positions.front())];
    }
    token = trim(token);
    if (token.empty() || token.find(kMaskToken) != std::string::npos) {
      throw ProtocolError("masked LM predicted an empty or mask token");
    }
    for (auto i : group.premise_positions) premise_tokens[i] = token;
    for (auto i : group.hypothesis_positions) hypothesis_tokens[i] = token;
  }
  return {join(premise_tokens, " "), join(hypothesis_tokens, " ")};
}

std::vector<LabeledExample> cmlm_augment_labeled(std::span<const LabeledExample> labeled,
                                                 const LabelSchema& schema, MlmBackend& mlm,
                                                 std::uint64_t seed) {
  if (labeled.empty()) throw ValidationError("C-MLM needs a non-empty labeled set");
  std::vector<LabeledExample> out(labeled.begin(), labeled.end());
  out.reserve(labeled.size() * 2);
  for (const auto& ex : labeled) {
    Rng rng(derive_seed(seed, "cmlm", ex.id));
    auto masked = cmlm_mask_common(ex.premise, ex.hypothesis, rng);
    auto [premise, hypothesis] = cmlm_fill(masked, ex.label, schema, mlm, derive_seed(seed, ex.id));
    LabeledExample copy = ex;
    copy.id += "#cmlm";
    copy.premise = std::move(premise);
    copy.hypothesis = std::move(hypothesis);
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> random_hypothesis_pairing(
    std::span<const std::string> premises, std::span<const std::string> sentence_pool, Rng& rng) {
  if (sentence_pool.empty()) throw ValidationError("random hypothesis pool is empty");
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(premises.size());
  std::vector<std::size_t> candidates;
  for (const auto& premise : premises) {
    candidates.clear();
    for (std::size_t i = 0; i < sentence_pool.size(); ++i) {
      if (sentence_pool[i] != premise) candidates.push_back(i);
    }
    if (candidates.empty()) {
      throw ValidationError("random hypothesis pool holds only the premise itself");
    }
    out.emplace_back(premise, sentence_pool[candidates[rng.below(candidates.size())]]);
  }
  return out;
}

std::vector<SyntheticExample> random_hypothesis_dataset(std::span<const UnlabeledPremise> premises,
                                                        std::span<const std::string> sentence_pool,
                                                        std::uint64_t seed) {
  std::vector<std::string> texts;
  texts.reserve(premises.size());
  for (const auto& p : premises) texts.push_back(p.premise);
  Rng rng(derive_seed(seed, "random-hypothesis"));
  auto pairs = random_hypothesis_pairing(texts, sentence_pool, rng);
  std::vector<SyntheticExample> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    SyntheticExample ex;
    ex.id = premises[i].id + "#rh";
    ex.premise_id = premises[i].id;
    ex.premise = pairs[i].first;
    ex.hypothesis = pairs[i].second;
    ex.generator_id = "random";
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace selftrain::augment
