// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace selftrain {

/// Bad input: malformed files, schema violations, invalid config.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A backend answered, but the answer does not conform to the wire protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A backend could not be reached within the retry budget.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A backend reported failure, or a simulated backend was misused.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Engine bookkeeping violated (double selection, unknown ids, ...).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a, 64 bit. Stable across platforms; used for ids and derived seeds.
std::uint64_t fnv1a(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Mixes a base seed with any number of integer or string tags.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, const Tags&... tags);

/// Deterministic random source.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard, and
/// implements the distributions itself so results do not depend on the
/// standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

std::string trim(std::string_view text);

/// Splits on runs of ASCII whitespace; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

std::string join(std::span<const std::string> parts, std::string_view separator);

std::string hex64(std::uint64_t value);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

std::string sha256_hex(std::string_view data);

// ---------------------------------------------------------------------------

namespace detail {
inline std::uint64_t mix_tag(std::uint64_t h, std::uint64_t tag) {
  return splitmix64(h ^ splitmix64(tag));
}
inline std::uint64_t mix_tag(std::uint64_t h, std::string_view tag) {
  return splitmix64(h ^ fnv1a(tag));
}
inline std::uint64_t mix_tag(std::uint64_t h, const std::string& tag) {
  return mix_tag(h, std::string_view(tag));
}
inline std::uint64_t mix_tag(std::uint64_t h, const char* tag) {
  return mix_tag(h, std::string_view(tag));
}
template <typename Int>
  requires std::is_integral_v<Int>
inline std::uint64_t mix_tag(std::uint64_t h, Int tag) {
  return mix_tag(h, static_cast<std::uint64_t>(tag));
}
}  // namespace detail

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, const Tags&... tags) {
  std::uint64_t h = splitmix64(seed);
  ((h = detail::mix_tag(h, tags)), ...);
  return h;
}

}  // namespace selftrain
