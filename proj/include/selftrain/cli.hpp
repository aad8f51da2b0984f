// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selftrain/backends.hpp"
#include "selftrain/datamodel.hpp"
#include "selftrain/engine.hpp"
#include "selftrain/generation.hpp"
#include "selftrain/remote.hpp"
#include "selftrain/sim.hpp"

namespace selftrain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `selftrain` command line in-process. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// A parsed config file. Relative paths are resolved against the directory
/// of the file.
struct Config {
  LabelSchema schema = LabelSchema::nli3();
  std::uint64_t seed = 0;
  bool sim = false;
  sim::SimWorld world;

  std::optional<std::filesystem::path> labeled;
  std::optional<std::filesystem::path> unlabeled;
  std::optional<std::filesystem::path> dev;
  std::optional<std::filesystem::path> synthetic;
  std::optional<std::filesystem::path> sentence_pool;
  std::optional<std::filesystem::path> lexicon;
  std::optional<std::filesystem::path> run_dir;

  generation::GeneratorMode generator_mode = generation::GeneratorMode::kPerClass;
  DecodingConfig decoding;
  bool random_hypotheses = false;
  double sr_rate = 0.1;

  engine::SelfTrainConfig selftrain;

  std::map<std::string, std::string> endpoints;  // role -> base URL
  remote::BackendEndpoint endpoint_defaults;

  static Config load(const std::filesystem::path& path);
  static Config from_json(const Json& j, const std::filesystem::path& base_dir);
  /// Resolved snapshot, as stored in manifests.
  Json to_json() const;
};

/// Seed precedence: flag, then SELFTRAIN_SEED, then the config file.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed);

/// ISO-8601 UTC time; SOURCE_DATE_EPOCH pins it when set.
std::string timestamp_now();

}  // namespace selftrain::cli
