// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selftrain/backends.hpp"
#include "selftrain/datamodel.hpp"

namespace selftrain::augment {

inline constexpr std::string_view kMaskToken = "[MASK]";

struct NoiseResult {
  std::vector<PseudoLabeledExample> examples;
  /// Items whose paraphrase failed; they keep their original text.
  std::size_t warnings = 0;
};

/// Replaces premise and hypothesis of every item with a paraphrase (two
/// augmenter texts per item). Failures degrade to the original text.
NoiseResult noise_pseudo_labeled(std::span<const PseudoLabeledExample> selected,
                                 AugmenterBackend& augmenter, std::uint64_t seed);

/// Originals followed by one paraphrased copy of each (ids suffixed "#bt").
/// Any augmenter failure is fatal here.
std::vector<LabeledExample> bt_augment_labeled(std::span<const LabeledExample> labeled,
                                               AugmenterBackend& augmenter, std::uint64_t seed);

/// Replaces ceil(rate * tokens) randomly chosen tokens of premise and of
/// hypothesis with a synonym. Tokens without synonyms are skipped without
/// using up the quota.
LabeledExample synonym_replace(const LabeledExample& example, const SynonymLexicon& lexicon,
                               double rate, Rng& rng);

/// Originals followed by synonym-replaced copies (ids suffixed "#sr").
std::vector<LabeledExample> sr_augment_labeled(std::span<const LabeledExample> labeled,
                                               const SynonymLexicon& lexicon, double rate,
                                               std::uint64_t seed);

/// "<P> implies <H>." / "<P> contradicts <H>." /
/// "<P> neither implies nor contradicts <H>." Defined for 3-way NLI only.
std::string cmlm_template(std::string_view premise, std::string_view hypothesis,
                          std::string_view label, const LabelSchema& schema);

/// One masked token type, linked across both sentences.
struct SharedMask {
  std::string original;
  std::vector<std::size_t> premise_positions;
  std::vector<std::size_t> hypothesis_positions;
};

struct MaskedPair {
  std::vector<std::string> premise_tokens;
  std::vector<std::string> hypothesis_tokens;
  std::vector<SharedMask> shared_masks;  // ordered by first premise occurrence
};

/// Masks max(1, floor(t/2)) of the t token types the two sentences share, at
/// every occurrence in both. t = 0 masks nothing.
MaskedPair cmlm_mask_common(std::string_view premise, std::string_view hypothesis, Rng& rng);

/// Asks the masked LM to fill the templated pair and writes one token per
/// shared type into both sentences; the prediction at the type's first
/// premise position wins.
std::pair<std::string, std::string> cmlm_fill(const MaskedPair& masked, std::string_view label,
                                              const LabelSchema& schema, MlmBackend& mlm,
                                              std::uint64_t seed);

/// Originals followed by C-MLM copies (ids suffixed "#cmlm").
std::vector<LabeledExample> cmlm_augment_labeled(std::span<const LabeledExample> labeled,
                                                 const LabelSchema& schema, MlmBackend& mlm,
                                                 std::uint64_t seed);

/// One uniformly drawn pool sentence per premise, never the premise itself.
std::vector<std::pair<std::string, std::string>> random_hypothesis_pairing(
    std::span<const std::string> premises, std::span<const std::string> sentence_pool, Rng& rng);

/// Unlabeled candidates (ids "<premise_id>#rh") for confidence-only self-training.
std::vector<SyntheticExample> random_hypothesis_dataset(std::span<const UnlabeledPremise> premises,
                                                        std::span<const std::string> sentence_pool,
                                                        std::uint64_t seed);

}  // namespace selftrain::augment
