// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

// HTTP/JSON clients for the model service protocol (version 1).
//
// Every request body is one JSON object carrying protocol_version,
// request_id and seed next to the endpoint payload; every 2xx response must
// echo protocol_version and request_id. Inference arrays are sent in chunks
// of at most kMaxBatch items.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "selftrain/backends.hpp"
#include "selftrain/datamodel.hpp"

namespace selftrain::remote {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxBatch = 256;

inline constexpr std::string_view kGeneratorTrain = "/generator/train";
inline constexpr std::string_view kGeneratorGenerate = "/generator/generate";
inline constexpr std::string_view kClassifierTrain = "/classifier/train";
inline constexpr std::string_view kClassifierPredict = "/classifier/predict";
inline constexpr std::string_view kAugmentParaphrase = "/augment/paraphrase";
inline constexpr std::string_view kMlmFill = "/mlm/fill";

struct BackendEndpoint {
  std::string base_url;  // scheme://host[:port], no path
  std::chrono::milliseconds timeout{60000};
  int retries = 3;
  std::chrono::milliseconds backoff{500};

  void validate() const;
  Json to_json() const;
};

/// POSTs `request` (which must already hold request_id and seed) to
/// base_url + path. Connection failures, timeouts and HTTP 429/502/503/504
/// are retried up to `retries` times, sleeping backoff * 2^attempt between
/// attempts; then TransportError. Other non-2xx statuses raise BackendError.
/// A 2xx body that is not a protocol object raises ProtocolError at once.
Json remote_call(const BackendEndpoint& endpoint, std::string_view path, Json request);

/// Throws ProtocolError naming `what` and quoting the start of `body`.
[[noreturn]] void protocol_violation(std::string_view what, const Json& body);

/// Shared request plumbing: envelope construction and request ids
/// ("<prefix>-<n>", counting from 1 per client).
class Client {
 public:
  Client(BackendEndpoint endpoint, std::string prefix);

  Json call(std::string_view path, Json payload, std::uint64_t seed);
  const BackendEndpoint& endpoint() const { return endpoint_; }

 private:
  BackendEndpoint endpoint_;
  std::string prefix_;
  std::atomic<std::uint64_t> counter_{0};
};

class RemoteGenerator : public GeneratorBackend {
 public:
  explicit RemoteGenerator(BackendEndpoint endpoint) : client_(std::move(endpoint), "gen") {}

  std::string train(std::span<const GeneratorTrainingPair> pairs, std::string_view cls,
                    const DecodingConfig& decoding) override;
  std::vector<std::string> generate(const std::string& model_ref,
                                    std::span<const std::string> prompts,
                                    const DecodingConfig& decoding) override;

 private:
  Client client_;
};

class RemoteClassifier : public ClassifierBackend {
 public:
  RemoteClassifier(BackendEndpoint endpoint, LabelSchema schema)
      : client_(std::move(endpoint), "clf"), schema_(std::move(schema)) {}

  std::string train(TrainPhase phase, std::span<const TrainingRecord> records,
                    const std::optional<std::string>& base_ref, std::uint64_t seed) override;
  std::vector<ClassDistribution> predict(const std::string& model_ref,
                                         std::span<const TextPair> pairs) override;

 private:
  Client client_;
  LabelSchema schema_;
};

class RemoteAugmenter : public AugmenterBackend {
 public:
  explicit RemoteAugmenter(BackendEndpoint endpoint) : client_(std::move(endpoint), "aug") {}

  std::vector<std::optional<std::string>> paraphrase(std::span<const std::string> texts,
                                                     std::uint64_t seed) override;

 private:
  Client client_;
};

class RemoteMlm : public MlmBackend {
 public:
  explicit RemoteMlm(BackendEndpoint endpoint) : client_(std::move(endpoint), "mlm") {}

  std::vector<std::vector<std::string>> fill(std::span<const std::string> texts,
                                             std::string_view mask_token,
                                             std::uint64_t seed) override;

 private:
  Client client_;
};

/// Seed sent with chunk `index` of a chunked request: the caller's seed for
/// the first chunk, a derived one for the rest.
std::uint64_t chunk_seed(std::uint64_t seed, std::size_t index);

}  // namespace selftrain::remote
