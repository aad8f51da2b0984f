// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace selftrain::sim {

namespace {

constexpr std::string_view kEntailment = "entailment";
constexpr std::string_view kContradiction = "contradiction";
constexpr std::string_view kNeutral = "neutral";

/// `count` distinct tokens from [lo, hi) that are not in `exclude`.
std::vector<int> draw_distinct(int lo, int hi, std::size_t count, const std::set<int>& exclude,
                               Rng& rng) {
  std::vector<int> candidates;
  for (int t = lo; t < hi; ++t) {
    if (!exclude.contains(t)) candidates.push_back(t);
  }
  if (candidates.size() < count) throw ValidationError("sim world vocabulary exhausted");
  std::vector<int> out;
  for (auto i : rng.sample_indices(candidates.size(), count)) out.push_back(candidates[i]);
  return out;
}

std::vector<int> make_premise(const SimWorld& world, Rng& rng) {
  auto tokens = draw_distinct(0, world.lower_size(),
                              static_cast<std::size_t>(world.premise_length), {}, rng);
  std::sort(tokens.begin(), tokens.end());
  return tokens;
}

}  // namespace

void SimWorld::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("sim world: " + what); };
  if (premise_length < 1) fail("premise_length must be >= 1");
  if (entail_min_length < 1 || entail_max_length < entail_min_length) {
    fail("entailment length range is empty");
  }
  if (contradiction_min_length < 1 || contradiction_max_length < contradiction_min_length) {
    fail("contradiction length range is empty");
  }
  if (neutral_min_length < 2 || neutral_max_length < neutral_min_length) {
    fail("neutral length range must start at >= 2");
  }
  if (!(neutral_premise_share > 0.0 && neutral_premise_share < 1.0)) {
    fail("neutral_premise_share must be in (0,1)");
  }
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("noise_rate must be in [0,1]");
  if (vocab_size < 2) fail("vocab_size too small");
  const int lower = lower_size();
  const int upper = vocab_size - lower;
  if (lower < premise_length + neutral_max_length) {
    fail("vocab too small: lower half must hold a premise plus fresh neutral tokens");
  }
  if (upper < contradiction_max_length) {
    fail("vocab too small: upper half cannot hold a contradiction hypothesis");
  }
}

Json SimWorld::to_json() const {
  Json j;
  j["vocab_size"] = vocab_size;
  j["premise_length"] = premise_length;
  j["entail_min_length"] = entail_min_length;
  j["entail_max_length"] = entail_max_length;
  j["contradiction_min_length"] = contradiction_min_length;
  j["contradiction_max_length"] = contradiction_max_length;
  j["neutral_min_length"] = neutral_min_length;
  j["neutral_max_length"] = neutral_max_length;
  j["neutral_premise_share"] = neutral_premise_share;
  j["noise_rate"] = noise_rate;
  j["seed"] = seed;
  return j;
}

SimWorld SimWorld::from_json(const Json& j) {
  SimWorld w;
  if (j.is_null()) return w;
  if (!j.is_object()) throw ValidationError("sim world must be an object");
  try {
    w.vocab_size = j.value("vocab_size", w.vocab_size);
    w.premise_length = j.value("premise_length", w.premise_length);
    w.entail_min_length = j.value("entail_min_length", w.entail_min_length);
    w.entail_max_length = j.value("entail_max_length", w.entail_max_length);
    w.contradiction_min_length = j.value("contradiction_min_length", w.contradiction_min_length);
    w.contradiction_max_length = j.value("contradiction_max_length", w.contradiction_max_length);
    w.neutral_min_length = j.value("neutral_min_length", w.neutral_min_length);
    w.neutral_max_length = j.value("neutral_max_length", w.neutral_max_length);
    w.neutral_premise_share = j.value("neutral_premise_share", w.neutral_premise_share);
    w.noise_rate = j.value("noise_rate", w.noise_rate);
    w.seed = j.value("seed", w.seed);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("sim world: ") + e.what());
  }
  w.validate();
  return w;
}

LabelSchema sim_schema() { return LabelSchema::nli3(); }

std::vector<LabeledExample> sim_labeled_set(const SimWorld& world, std::size_t n,
                                            std::string_view stream, std::string_view id_prefix) {
  world.validate();
  const auto schema = sim_schema();
  Rng rng(derive_seed(world.seed, "labeled", stream));
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cls = schema.at(i % schema.size());
    auto premise = make_premise(world, rng);
    LabeledExample ex;
    ex.id = std::string(id_prefix) + std::to_string(i);
    ex.premise = render_tokens(premise);
    ex.hypothesis = sim_clean_hypothesis(world, cls, premise, rng);
    ex.label = cls;
    out.push_back(std::move(ex));
  }
  return out;
}

SimTask sim_make_task(const SimWorld& world, std::size_t n_labeled, std::size_t m_unlabeled,
                      std::size_t n_dev) {
  if (n_labeled < 1 || m_unlabeled < 1 || n_dev < 1) {
    throw ValidationError("sim_make_task: sizes must be >= 1");
  }
  world.validate();
  SimTask task;
  task.labeled = sim_labeled_set(world, n_labeled, "train", "l-");
  task.dev = sim_labeled_set(world, n_dev, "dev", "d-");
  Rng rng(derive_seed(world.seed, "unlabeled"));
  task.unlabeled.reserve(m_unlabeled);
  for (std::size_t i = 0; i < m_unlabeled; ++i) {
    task.unlabeled.push_back({"u-" + std::to_string(i), render_tokens(make_premise(world, rng)),
                              Json::object()});
  }
  return task;
}

std::vector<int> parse_tokens(const SimWorld& world, std::string_view text) {
  std::vector<int> out;
  for (const auto& tok : split_whitespace(text)) {
    if (tok.size() > 9 || !std::all_of(tok.begin(), tok.end(), [](char c) {
          return c >= '0' && c <= '9';
        })) {
      throw ValidationError("sim token '" + tok + "' is not a decimal integer");
    }
    int value = std::stoi(tok);
    if (value >= world.vocab_size) {
      throw ValidationError("sim token " + tok + " is outside the vocabulary");
    }
    out.push_back(value);
  }
  if (out.empty()) throw ValidationError("sim text has no tokens");
  return out;
}

std::string render_tokens(const std::vector<int>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::string sim_oracle(const SimWorld& world, std::string_view premise,
                       std::string_view hypothesis) {
  auto p = parse_tokens(world, premise);
  auto h = parse_tokens(world, hypothesis);
  std::set<int> pset(p.begin(), p.end());
  bool subset = true;
  bool disjoint_upper = true;
  for (int t : h) {
    bool in_premise = pset.contains(t);
    subset = subset && in_premise;
    disjoint_upper = disjoint_upper && !in_premise && t >= world.lower_size();
  }
  if (subset) return std::string(kEntailment);
  if (disjoint_upper) return std::string(kContradiction);
  return std::string(kNeutral);
}

std::string sim_clean_hypothesis(const SimWorld& world, std::string_view cls,
                                 const std::vector<int>& premise, Rng& rng) {
  const std::set<int> pset(premise.begin(), premise.end());
  const int psize = static_cast<int>(premise.size());
  if (cls == kEntailment) {
    int hi = std::min(world.entail_max_length, psize);
    int lo = std::min(world.entail_min_length, hi);
    auto len = static_cast<std::size_t>(rng.between(lo, hi));
    std::vector<int> out;
    for (auto i : rng.sample_indices(premise.size(), len)) out.push_back(premise[i]);
    return render_tokens(out);
  }
  if (cls == kContradiction) {
    auto len = static_cast<std::size_t>(
        rng.between(world.contradiction_min_length, world.contradiction_max_length));
    return render_tokens(draw_distinct(world.lower_size(), world.vocab_size, len, pset, rng));
  }
  if (cls == kNeutral) {
    const int len = static_cast<int>(rng.between(world.neutral_min_length, world.neutral_max_length));
    int from_premise = static_cast<int>(std::lround(len * world.neutral_premise_share));
    from_premise = std::clamp(from_premise, 1, std::min(len - 1, psize));
    std::vector<int> out;
    for (auto i : rng.sample_indices(premise.size(), static_cast<std::size_t>(from_premise))) {
      out.push_back(premise[i]);
    }
    auto fresh = draw_distinct(0, world.lower_size(), static_cast<std::size_t>(len - from_premise),
                               pset, rng);
    out.insert(out.end(), fresh.begin(), fresh.end());
    rng.shuffle(out);
    return render_tokens(out);
  }
  throw ValidationError("sim world has no rule for class '" + std::string(cls) + "'");
}

std::string sim_generator(const SimWorld& world, std::string_view cls, std::string_view premise,
                          Rng& rng) {
  const auto schema = sim_schema();
  schema.require(cls);
  auto tokens = parse_tokens(world, premise);
  std::string target(cls);
  if (rng.bernoulli(world.noise_rate)) {
    std::vector<std::string> others;
    for (const auto& c : schema.classes()) {
      if (c != cls) others.push_back(c);
    }
    target = others[rng.below(others.size())];
  }
  return sim_clean_hypothesis(world, target, tokens, rng);
}

// --- SimGenerator ------------------------------------------------------------

std::string SimGenerator::train(std::span<const GeneratorTrainingPair> pairs, std::string_view cls,
                                const DecodingConfig& decoding) {
  if (pairs.empty()) throw BackendError("sim generator: empty training set");
  if (!cls.empty()) sim_schema().require(cls);
  std::uint64_t h = derive_seed(decoding.seed, "sim-gen", cls);
  for (const auto& p : pairs) h = derive_seed(h, p.source, p.target, p.cls);
  std::string ref = "sim-gen-" + (cls.empty() ? std::string("single") : std::string(cls)) + "-" +
                    hex64(h).substr(0, 8);
  std::lock_guard lock(mu_);
  bound_class_[ref] = std::string(cls);
  return ref;
}

std::vector<std::string> SimGenerator::generate(const std::string& model_ref,
                                                std::span<const std::string> prompts,
                                                const DecodingConfig& decoding) {
  decoding.validate();
  std::string bound;
  {
    std::lock_guard lock(mu_);
    auto it = bound_class_.find(model_ref);
    if (it == bound_class_.end()) throw BackendError("sim generator: unknown model_ref " + model_ref);
    bound = it->second;
  }
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for (const auto& prompt : prompts) {
    std::string premise = prompt;
    std::string cls = bound;
    if (cls.empty()) {
      auto pos = prompt.rfind(' ');
      if (pos == std::string::npos) {
        throw BackendError("sim generator: single-mode prompt lacks a class suffix");
      }
      premise = prompt.substr(0, pos);
      cls = prompt.substr(pos + 1);
    }
    Rng rng(derive_seed(decoding.seed, "generate", cls, premise));
    auto hyp = sim_generator(world_, cls, premise, rng);
    auto tokens = split_whitespace(hyp);
    if (tokens.size() > static_cast<std::size_t>(decoding.max_length)) {
      tokens.resize(static_cast<std::size_t>(decoding.max_length));
      hyp = join(tokens, " ");
    }
    out.push_back(std::move(hyp));
  }
  return out;
}

// --- SimClassifier -----------------------------------------------------------

SimClassifier::SimClassifier(SimWorld world, SimClassifierOptions options)
    : world_(std::move(world)), options_(options), schema_(sim_schema()) {
  world_.validate();
  if (!(options_.smoothing > 0.0)) throw ValidationError("sim classifier smoothing must be > 0");
  if (!(options_.retention >= 0.0 && options_.retention <= 1.0)) {
    throw ValidationError("sim classifier retention must be in [0,1]");
  }
}

SimClassifier::Features SimClassifier::features(std::string_view premise,
                                                std::string_view hypothesis) const {
  auto p = parse_tokens(world_, premise);
  auto h = parse_tokens(world_, hypothesis);
  std::set<int> pset(p.begin(), p.end());
  std::set<int> hset(h.begin(), h.end());
  std::size_t shared = 0, upper = 0;
  for (int t : hset) {
    shared += pset.contains(t) ? 1 : 0;
    upper += t >= world_.lower_size() ? 1 : 0;
  }
  const double n = static_cast<double>(hset.size());
  Features f;
  if (shared == 0) {
    f.overlap = 0;
  } else if (shared == hset.size()) {
    f.overlap = kOverlapBins - 1;
  } else {
    f.overlap = 1 + std::min<std::size_t>(3, static_cast<std::size_t>(shared / n * 4.0));
  }
  f.upper = upper == 0 ? 0 : (upper == hset.size() ? 2 : 1);
  const double ratio = static_cast<double>(h.size()) / static_cast<double>(p.size());
  f.ratio = std::min<std::size_t>(kRatioBins - 1, static_cast<std::size_t>(ratio * 4.0));
  return f;
}

SimClassifier::Model SimClassifier::fresh() const {
  const std::size_t k = schema_.size();
  Model m;
  m.class_counts.assign(k, 0.0);
  m.overlap.assign(k, std::vector<double>(kOverlapBins, 0.0));
  m.upper.assign(k, std::vector<double>(kUpperBins, 0.0));
  m.ratio.assign(k, std::vector<double>(kRatioBins, 0.0));
  return m;
}

std::string SimClassifier::train(TrainPhase phase, std::span<const TrainingRecord> records,
                                 const std::optional<std::string>& base_ref, std::uint64_t seed) {
  if (records.empty()) throw BackendError("sim classifier: empty training set");
  Model model = fresh();
  if (base_ref) {
    std::lock_guard lock(mu_);
    auto it = models_.find(*base_ref);
    if (it == models_.end()) throw BackendError("sim classifier: unknown base model " + *base_ref);
    model = it->second;
    auto decay = [r = options_.retention](std::vector<double>& v) {
      for (auto& x : v) x *= r;
    };
    decay(model.class_counts);
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      decay(model.overlap[c]);
      decay(model.upper[c]);
      decay(model.ratio[c]);
    }
  }

  std::uint64_t h = derive_seed(seed, "sim-clf", to_string(phase), base_ref.value_or(""));
  for (const auto& r : records) {
    auto c = schema_.require(r.label);
    auto f = features(r.premise, r.hypothesis);
    model.class_counts[c] += 1.0;
    model.overlap[c][f.overlap] += 1.0;
    model.upper[c][f.upper] += 1.0;
    model.ratio[c][f.ratio] += 1.0;
    h = derive_seed(h, r.premise, r.hypothesis, r.label);
  }
  std::string ref = "sim-clf-" + hex64(h);
  std::lock_guard lock(mu_);
  models_[ref] = std::move(model);
  return ref;
}

std::vector<ClassDistribution> SimClassifier::predict(const std::string& model_ref,
                                                      std::span<const TextPair> pairs) {
  Model model;
  {
    std::lock_guard lock(mu_);
    auto it = models_.find(model_ref);
    if (it == models_.end()) {
      throw BackendError("sim classifier: model '" + model_ref + "' has not been trained");
    }
    model = it->second;
  }
  const std::size_t k = schema_.size();
  const double a = options_.smoothing;
  double total = 0.0;
  for (double c : model.class_counts) total += c;

  std::vector<ClassDistribution> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) {
    auto f = features(pair.premise, pair.hypothesis);
    std::vector<double> logp(k);
    for (std::size_t c = 0; c < k; ++c) {
      const double nc = model.class_counts[c];
      logp[c] = std::log((nc + a) / (total + a * static_cast<double>(k))) +
                std::log((model.overlap[c][f.overlap] + a) / (nc + a * kOverlapBins)) +
                std::log((model.upper[c][f.upper] + a) / (nc + a * kUpperBins)) +
                std::log((model.ratio[c][f.ratio] + a) / (nc + a * kRatioBins));
    }
    const double mx = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (auto& v : logp) {
      v = std::exp(v - mx);
      z += v;
    }
    ClassDistribution d;
    d.probs.resize(k);
    for (std::size_t c = 0; c < k; ++c) d.probs[c] = logp[c] / z;
    out.push_back(std::move(d));
  }
  return out;
}

// --- SimAugmenter / SimMlm ---------------------------------------------------

std::vector<std::optional<std::string>> SimAugmenter::paraphrase(
    std::span<const std::string> texts, std::uint64_t seed) {
  std::vector<std::optional<std::string>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    auto tokens = split_whitespace(text);
    Rng rng(derive_seed(seed, "paraphrase", text));
    rng.shuffle(tokens);
    out.emplace_back(join(tokens, " "));
  }
  return out;
}

SimMlm::SimMlm(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.empty()) throw ValidationError("sim mlm needs a non-empty vocabulary");
}

SimMlm SimMlm::for_world(const SimWorld& world) {
  std::vector<std::string> vocab;
  for (int t = 0; t < world.vocab_size; ++t) vocab.push_back(std::to_string(t));
  return SimMlm(std::move(vocab));
}

std::vector<std::vector<std::string>> SimMlm::fill(std::span<const std::string> texts,
                                                   std::string_view mask_token,
                                                   std::uint64_t seed) {
  if (mask_token.empty()) throw BackendError("sim mlm: empty mask token");
  std::vector<std::vector<std::string>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<std::string> predictions;
    std::size_t pos = 0;
    std::size_t occurrence = 0;
    while ((pos = text.find(mask_token, pos)) != std::string::npos) {
      Rng rng(derive_seed(seed, "mlm", text, occurrence++));
      predictions.push_back(vocabulary_[rng.below(vocabulary_.size())]);
      pos += mask_token.size();
    }
    out.push_back(std::move(predictions));
  }
  return out;
}

}  // namespace selftrain::sim
