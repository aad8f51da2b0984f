// Copyright 2026 The selftrain Authors
// SPDX-License-Identifier: Apache-2.0

// In-test HTTP server speaking protocol version 1 in "echo mode":
//
//   /generator/train     model_ref "echo-gen-<class|single>-<n>"
//   /generator/generate  the prompt, reversed word by word
//   /classifier/train    model_ref "echo-clf-<n>"
//   /classifier/predict  0.8 on class fnv1a(premise \t hypothesis) mod |C|,
//                        the rest spread evenly
//   /augment/paraphrase  the text reversed word by word; null for blank text
//   /mlm/fill            "echo<i>" for the i-th mask of each text
//
// A fault hook can replace any response, for retry and error tests.

#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "selftrain/common.hpp"
#include "selftrain/datamodel.hpp"

namespace fakes {

struct Reply {
  int status = 200;
  std::string body;
};

class EchoServer {
 public:
  /// Returning a Reply short-circuits the echo handler.
  using Fault = std::function<std::optional<Reply>(const std::string& path, const selftrain::Json&, int n)>;

  EchoServer() {
    for (const char* path : {"/generator/train", "/generator/generate", "/classifier/train",
                             "/classifier/predict", "/augment/paraphrase", "/mlm/fill"}) {
      server_.Post(path, [this](const httplib::Request& req, httplib::Response& res) {
        handle(req, res);
      });
    }
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"status\":\"ok\"}", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~EchoServer() {
    server_.stop();
    thread_.join();
  }

  EchoServer(const EchoServer&) = delete;
  EchoServer& operator=(const EchoServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  void set_fault(Fault fault) {
    std::lock_guard lock(mu_);
    fault_ = std::move(fault);
  }

  int requests() const { return requests_.load(); }

  /// (path, request body) in arrival order.
  std::vector<std::pair<std::string, selftrain::Json>> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  /// The echo response for a request, without HTTP. Used to check recorded
  /// fixtures against the echo contract.
  Reply respond(const std::string& path, const selftrain::Json& req) {
    using selftrain::Json;
    auto error = [&](int status, const std::string& message) {
      Json id = req.is_object() && req.contains("request_id") ? req["request_id"] : Json(nullptr);
      Json body = {{"protocol_version", 1},
                   {"request_id", id},
                   {"error", {{"message", message}}}};
      return Reply{status, body.dump()};
    };
    if (!req.is_object() || req.value("protocol_version", 0) != 1 || !req.contains("request_id") ||
        !req["request_id"].is_string() || !req.contains("seed") || !req["seed"].is_number_unsigned()) {
      return error(400, "request lacks protocol_version 1, request_id or seed");
    }
    Json out = {{"protocol_version", 1}, {"request_id", req["request_id"]}};
    auto too_big = [&](const char* key) {
      return req.contains(key) && req[key].is_array() && req[key].size() > 256;
    };
    std::lock_guard lock(state_mu_);
    if (path == "/generator/train") {
      if (!req.contains("pairs") || !req["pairs"].is_array() || req["pairs"].empty()) {
        return error(400, "pairs must be a non-empty array");
      }
      std::string cls = req.contains("class") && req["class"].is_string() ? req["class"].get<std::string>() : "single";
      out["model_ref"] = "echo-gen-" + cls + "-" + std::to_string(++models_);
      generators_.insert(out["model_ref"].get<std::string>());
    } else if (path == "/generator/generate") {
      if (too_big("prompts")) return error(413, "batch exceeds 256 items");
      if (!generators_.count(req.value("model_ref", std::string()))) return error(404, "unknown model_ref");
      Json outputs = Json::array();
      for (const auto& p : req.at("prompts")) outputs.push_back(reverse_words(p.get<std::string>()));
      out["outputs"] = outputs;
    } else if (path == "/classifier/train") {
      if (!req.contains("records") || !req["records"].is_array() || req["records"].empty()) {
        return error(400, "records must be a non-empty array");
      }
      const std::string phase = req.value("phase", std::string());
      if (phase != "combined" && phase != "pseudo" && phase != "labeled") {
        return error(400, "phase must be combined, pseudo or labeled");
      }
      if (req.contains("base_model_ref") && req["base_model_ref"].is_string() && !classifiers_.count(req["base_model_ref"].get<std::string>())) {
        return error(404, "unknown base_model_ref");
      }
      const std::string ref = "echo-clf-" + std::to_string(++models_);
      classifiers_[ref] = req.at("labels").get<std::vector<std::string>>();
      out["model_ref"] = ref;
    } else if (path == "/classifier/predict") {
      if (too_big("pairs")) return error(413, "batch exceeds 256 items");
      auto it = classifiers_.find(req.value("model_ref", std::string()));
      if (it == classifiers_.end()) return error(404, "unknown model_ref");
      const auto& labels = it->second;
      Json dists = Json::array();
      for (const auto& p : req.at("pairs")) {
        const std::string key = p.at("premise").get<std::string>() + "\t" +
                                p.at("hypothesis").get<std::string>();
        const std::size_t top = selftrain::fnv1a(key) % labels.size();
        Json d = Json::object();
        for (std::size_t c = 0; c < labels.size(); ++c) {
          d[labels[c]] = c == top ? 0.8 : 0.2 / static_cast<double>(labels.size() - 1);
        }
        dists.push_back(d);
      }
      out["distributions"] = dists;
    } else if (path == "/augment/paraphrase") {
      if (too_big("texts")) return error(413, "batch exceeds 256 items");
      Json outputs = Json::array();
      for (const auto& t : req.at("texts")) {
        auto text = t.get<std::string>();
        outputs.push_back(selftrain::trim(text).empty() ? Json(nullptr) : Json(reverse_words(text)));
      }
      out["outputs"] = outputs;
    } else if (path == "/mlm/fill") {
      if (too_big("texts")) return error(413, "batch exceeds 256 items");
      const std::string mask = req.at("mask_token").get<std::string>();
      Json preds = Json::array();
      for (const auto& t : req.at("texts")) {
        const auto text = t.get<std::string>();
        Json row = Json::array();
        int i = 0;
        for (auto pos = text.find(mask); pos != std::string::npos; pos = text.find(mask, pos + mask.size())) {
          row.push_back("echo" + std::to_string(i++));
        }
        preds.push_back(row);
      }
      out["predictions"] = preds;
    } else {
      return error(404, "unknown endpoint");
    }
    return {200, out.dump()};
  }

  static std::string reverse_words(const std::string& text) {
    auto words = selftrain::split_whitespace(text);
    std::reverse(words.begin(), words.end());
    return selftrain::join(words, " ");
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int n = ++requests_;
    auto body = selftrain::Json::parse(req.body, nullptr, false);
    Fault fault;
    {
      std::lock_guard lock(mu_);
      log_.emplace_back(req.path, body);
      fault = fault_;
    }
    std::optional<Reply> reply;
    if (fault) reply = fault(req.path, body, n);
    if (!reply) {
      try {
        reply = respond(req.path, body);
      } catch (const selftrain::Json::exception& e) {
        reply = Reply{400, selftrain::Json({{"error", {{"message", e.what()}}}}).dump()};
      }
    }
    res.status = reply->status;
    res.set_content(reply->body, "application/json");
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  mutable std::mutex mu_;
  Fault fault_;
  std::vector<std::pair<std::string, selftrain::Json>> log_;

  std::mutex state_mu_;
  int models_ = 0;
  std::set<std::string> generators_;
  std::map<std::string, std::vector<std::string>> classifiers_;
};

}  // namespace fakes
