// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "selftrain/remote.hpp"

#include <thread>

#include "httplib.h"

namespace selftrain::remote {

namespace {

constexpr std::size_t kExcerpt = 200;

std::string excerpt(std::string_view body) {
  if (body.size() <= kExcerpt) return std::string(body);
  return std::string(body.substr(0, kExcerpt)) + "...";
}

bool retryable_status(int status) {
  return status == 429 || status == 502 || status == 503 || status == 504;
}

std::string error_message(const std::string& body) {
  auto j = Json::parse(body, nullptr, false);
  if (j.is_object() && j.contains("error")) {
    const auto& e = j["error"];
    if (e.is_string()) return e.get<std::string>();
    if (e.is_object() && e.contains("message") && e["message"].is_string()) {
      return e["message"].get<std::string>();
    }
  }
  return excerpt(body);
}

const Json& field(const Json& body, std::string_view name, Json::value_t type) {
  auto it = body.find(name);
  if (it == body.end()) protocol_violation("response lacks '" + std::string(name) + "'", body);
  bool ok = it->type() == type ||
            (type == Json::value_t::number_integer && it->is_number_integer());
  if (!ok) protocol_violation("response field '" + std::string(name) + "' has the wrong type", body);
  return *it;
}

std::string model_ref_of(const Json& body) {
  auto ref = field(body, "model_ref", Json::value_t::string).get<std::string>();
  if (ref.empty()) protocol_violation("empty model_ref", body);
  return ref;
}

const Json& array_of(const Json& body, std::string_view name, std::size_t expected) {
  const auto& arr = field(body, name, Json::value_t::array);
  if (arr.size() != expected) {
    protocol_violation("'" + std::string(name) + "' has " + std::to_string(arr.size()) +
                           " items, expected " + std::to_string(expected),
                       body);
  }
  return arr;
}

template <typename T, typename Fn>
void for_each_chunk(std::span<const T> items, Fn&& fn) {
  for (std::size_t start = 0, index = 0; start < items.size(); start += kMaxBatch, ++index) {
    fn(items.subspan(start, std::min(kMaxBatch, items.size() - start)), index);
  }
}

}  // namespace

void BackendEndpoint::validate() const {
  if (base_url.rfind("http://", 0) != 0) {
    throw ValidationError("endpoint '" + base_url + "' must be an http:// URL");
  }
  if (base_url.find('/', 7) != std::string::npos) {
    throw ValidationError("endpoint '" + base_url + "' must not carry a path");
  }
  if (retries < 0) throw ValidationError("endpoint retries must be >= 0");
  if (timeout.count() <= 0) throw ValidationError("endpoint timeout must be positive");
  if (backoff.count() < 0) throw ValidationError("endpoint backoff must be >= 0");
}

Json BackendEndpoint::to_json() const {
  return {{"base_url", base_url},
          {"timeout_ms", timeout.count()},
          {"retries", retries},
          {"backoff_ms", backoff.count()}};
}

void protocol_violation(std::string_view what, const Json& body) {
  throw ProtocolError(std::string(what) + "; body: " +
                      excerpt(body.dump(-1, ' ', false, Json::error_handler_t::replace)));
}

Json remote_call(const BackendEndpoint& endpoint, std::string_view path, Json request) {
  endpoint.validate();
  request["protocol_version"] = kProtocolVersion;
  const std::string request_id = request.value("request_id", std::string());
  const std::string payload = request.dump();

  std::string last_failure;
  for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(endpoint.backoff * (1LL << (attempt - 1)));

    httplib::Client cli(endpoint.base_url);
    cli.set_connection_timeout(endpoint.timeout);
    cli.set_read_timeout(endpoint.timeout);
    cli.set_write_timeout(endpoint.timeout);
    auto res = cli.Post(std::string(path), payload, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError(std::string(path) + " failed with HTTP " + std::to_string(res->status) +
                         ": " + error_message(res->body));
    }

    auto body = Json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      throw ProtocolError(std::string(path) + ": response is not a JSON object; body: " +
                          excerpt(res->body));
    }
    auto version = body.find("protocol_version");
    if (version == body.end() || !version->is_number_integer() ||
        version->get<int>() != kProtocolVersion) {
      protocol_violation(std::string(path) + ": unsupported protocol_version", body);
    }
    auto id = body.find("request_id");
    if (id == body.end() || !id->is_string() || id->get<std::string>() != request_id) {
      protocol_violation(std::string(path) + ": response request_id does not match", body);
    }
    return body;
  }
  throw TransportError(std::string(path) + " at " + endpoint.base_url + " failed after " +
                       std::to_string(endpoint.retries + 1) + " attempt(s): " + last_failure);
}

std::uint64_t chunk_seed(std::uint64_t seed, std::size_t index) {
  return index == 0 ? seed : derive_seed(seed, "chunk", index);
}

Client::Client(BackendEndpoint endpoint, std::string prefix)
    : endpoint_(std::move(endpoint)), prefix_(std::move(prefix)) {
  endpoint_.validate();
}

Json Client::call(std::string_view path, Json payload, std::uint64_t seed) {
  Json request;
  request["protocol_version"] = kProtocolVersion;
  request["request_id"] = prefix_ + "-" + std::to_string(++counter_);
  request["seed"] = seed;
  for (auto it = payload.begin(); it != payload.end(); ++it) request[it.key()] = std::move(*it);
  return remote_call(endpoint_, path, std::move(request));
}

// --- Roles ---------------------------------------------------------------------

std::string RemoteGenerator::train(std::span<const GeneratorTrainingPair> pairs,
                                   std::string_view cls, const DecodingConfig& decoding) {
  Json items = Json::array();
  for (const auto& p : pairs) {
    items.push_back({{"source", p.source}, {"target", p.target}, {"class", p.cls}});
  }
  Json payload;
  payload["class"] = cls.empty() ? Json(nullptr) : Json(std::string(cls));
  payload["pairs"] = std::move(items);
  payload["decoding"] = decoding.to_json();
  return model_ref_of(client_.call(kGeneratorTrain, std::move(payload), decoding.seed));
}

std::vector<std::string> RemoteGenerator::generate(const std::string& model_ref,
                                                   std::span<const std::string> prompts,
                                                   const DecodingConfig& decoding) {
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for_each_chunk(prompts, [&](std::span<const std::string> chunk, std::size_t index) {
    DecodingConfig d = decoding;
    d.seed = chunk_seed(decoding.seed, index);
    Json payload;
    payload["model_ref"] = model_ref;
    payload["prompts"] = Json(std::vector<std::string>(chunk.begin(), chunk.end()));
    payload["decoding"] = d.to_json();
    auto body = client_.call(kGeneratorGenerate, std::move(payload), d.seed);
    for (const auto& o : array_of(body, "outputs", chunk.size())) {
      if (!o.is_string()) protocol_violation("generator output is not a string", body);
      out.push_back(o.get<std::string>());
    }
  });
  return out;
}

std::string RemoteClassifier::train(TrainPhase phase, std::span<const TrainingRecord> records,
                                    const std::optional<std::string>& base_ref,
                                    std::uint64_t seed) {
  Json items = Json::array();
  for (const auto& r : records) {
    items.push_back({{"premise", r.premise}, {"hypothesis", r.hypothesis}, {"label", r.label}});
  }
  Json payload;
  payload["phase"] = std::string(to_string(phase));
  payload["base_model_ref"] = base_ref ? Json(*base_ref) : Json(nullptr);
  payload["labels"] = Json(std::vector<std::string>(schema_.classes().begin(),
                                                    schema_.classes().end()));
  payload["records"] = std::move(items);
  return model_ref_of(client_.call(kClassifierTrain, std::move(payload), seed));
}

std::vector<ClassDistribution> RemoteClassifier::predict(const std::string& model_ref,
                                                         std::span<const TextPair> pairs) {
  std::vector<ClassDistribution> out;
  out.reserve(pairs.size());
  for_each_chunk(pairs, [&](std::span<const TextPair> chunk, std::size_t index) {
    Json items = Json::array();
    for (const auto& p : chunk) items.push_back({{"premise", p.premise}, {"hypothesis", p.hypothesis}});
    Json payload;
    payload["model_ref"] = model_ref;
    payload["pairs"] = std::move(items);
    auto body = client_.call(kClassifierPredict, std::move(payload), chunk_seed(0, index));
    for (const auto& d : array_of(body, "distributions", chunk.size())) {
      try {
        auto dist = ClassDistribution::from_json(d, schema_);
        dist.validate(schema_);
        out.push_back(std::move(dist));
      } catch (const ProtocolError& e) {
        protocol_violation(e.what(), body);
      }
    }
  });
  return out;
}

std::vector<std::optional<std::string>> RemoteAugmenter::paraphrase(
    std::span<const std::string> texts, std::uint64_t seed) {
  std::vector<std::optional<std::string>> out;
  out.reserve(texts.size());
  for_each_chunk(texts, [&](std::span<const std::string> chunk, std::size_t index) {
    Json payload;
    payload["texts"] = Json(std::vector<std::string>(chunk.begin(), chunk.end()));
    auto body = client_.call(kAugmentParaphrase, std::move(payload), chunk_seed(seed, index));
    for (const auto& o : array_of(body, "outputs", chunk.size())) {
      if (o.is_null()) {
        out.emplace_back(std::nullopt);
      } else if (o.is_string()) {
        out.emplace_back(o.get<std::string>());
      } else {
        protocol_violation("paraphrase output is neither a string nor null", body);
      }
    }
  });
  return out;
}

std::vector<std::vector<std::string>> RemoteMlm::fill(std::span<const std::string> texts,
                                                      std::string_view mask_token,
                                                      std::uint64_t seed) {
  std::vector<std::vector<std::string>> out;
  out.reserve(texts.size());
  for_each_chunk(texts, [&](std::span<const std::string> chunk, std::size_t index) {
    Json payload;
    payload["mask_token"] = std::string(mask_token);
    payload["texts"] = Json(std::vector<std::string>(chunk.begin(), chunk.end()));
    auto body = client_.call(kMlmFill, std::move(payload), chunk_seed(seed, index));
    const auto& preds = array_of(body, "predictions", chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& row = preds[i];
      if (!row.is_array()) protocol_violation("mlm predictions must be arrays", body);
      std::size_t masks = 0;
      for (std::size_t pos = chunk[i].find(mask_token); pos != std::string::npos;
           pos = chunk[i].find(mask_token, pos + mask_token.size())) {
        ++masks;
      }
      if (row.size() != masks) {
        protocol_violation("mlm returned " + std::to_string(row.size()) + " tokens for " +
                               std::to_string(masks) + " masks",
                           body);
      }
      std::vector<std::string> tokens;
      for (const auto& t : row) {
        if (!t.is_string()) protocol_violation("mlm prediction is not a string", body);
        tokens.push_back(t.get<std::string>());
      }
      out.push_back(std::move(tokens));
    }
  });
  return out;
}

}  // namespace selftrain::remote
