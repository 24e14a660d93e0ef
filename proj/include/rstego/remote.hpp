#pragma once

// Adapters for OpenAI-compatible HTTP endpoints: next-token distributions
// from completion logprobs, embeddings, and sentence paraphrase.
//
// Completion APIs return only the top few logprobs per position. Vocabulary
// tokens missing from that list share the leftover probability mass
// uniformly, so the distribution handed to the watermark is an
// approximation of the provider's.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

#include "rstego/attacks.hpp"
#include "rstego/embedding.hpp"
#include "rstego/langmodel.hpp"

namespace rstego {

class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, bool retryable) : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

struct RemoteConfig {
  std::string endpoint;  // scheme://host[:port], e.g. https://api.example.com
  std::string model;
  std::string api_key_env = "RSTEGO_API_KEY";
  std::string path_prefix = "/v1";
  int timeout_seconds = 30;
  int max_retries = 4;
  int backoff_ms = 250;  // doubled after each retry
  int top_logprobs = 20;
  std::size_t dimension = 0;  // embeddings only

  nlohmann::json to_json() const {
    return {{"endpoint", endpoint},         {"model", model},
            {"api_key_env", api_key_env},   {"path_prefix", path_prefix},
            {"timeout_seconds", timeout_seconds}, {"max_retries", max_retries},
            {"backoff_ms", backoff_ms},     {"top_logprobs", top_logprobs},
            {"dimension", dimension}};
  }

  static RemoteConfig from_json(const nlohmann::json& j) {
    RemoteConfig c;
    c.endpoint = j.at("endpoint").get<std::string>();
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.path_prefix = j.value("path_prefix", c.path_prefix);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
    c.dimension = j.value("dimension", c.dimension);
    return c;
  }
};

/// POSTs JSON to endpoint + path_prefix + path. Connection failures, 429 and
/// 5xx are retried with exponential backoff; other statuses fail at once.
/// Once retries are exhausted the error is reported as non-retryable.
inline nlohmann::json post_json(const RemoteConfig& cfg, const std::string& path, const nlohmann::json& body) {
  if (cfg.endpoint.empty()) throw std::invalid_argument("remote endpoint not configured");
  httplib::Client cli(cfg.endpoint);
  cli.set_connection_timeout(cfg.timeout_seconds, 0);
  cli.set_read_timeout(cfg.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  const std::string url = cfg.path_prefix + path;
  const std::string payload = body.dump();
  int delay = cfg.backoff_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    auto res = cli.Post(url, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + url + ": " + res->body, false);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed response from ") + url + ": " + e.what(), false);
    }
  }
  throw TransportError(last_error + " after " + std::to_string(cfg.max_retries + 1) + " attempts", false);
}

class RemoteLanguageModel final : public LanguageModel {
 public:
  RemoteLanguageModel(Vocabulary vocab, RemoteConfig cfg) : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {}

  const Vocabulary& vocabulary() const override { return vocab_; }

  TokenDistribution next_distribution(std::string_view prompt, std::span<const TokenId> prior) const override {
    std::string text(prompt);
    if (!prior.empty()) {
      if (!text.empty()) text += "\n\n";
      text += vocab_.render(prior);
    }
    nlohmann::json body{{"model", cfg_.model}, {"prompt", text},     {"max_tokens", 1},
                        {"temperature", 1.0},  {"logprobs", cfg_.top_logprobs}};
    auto resp = post_json(cfg_, "/completions", body);
    const auto& top = resp.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);

    TokenDistribution d;
    d.probs.assign(vocab_.size(), 0.0);
    std::vector<std::uint8_t> seen(vocab_.size(), 0);
    double listed = 0.0;
    for (auto& [tok, lp] : top.items()) {
      auto id = vocab_.index_of(trim(tok));
      if (!id) continue;
      double p = std::exp(lp.get<double>());
      d.probs[*id] += p;
      listed += p;
      seen[*id] = 1;
    }
    std::size_t unseen = 0;
    for (auto s : seen) unseen += s == 0;
    double rest = std::max(0.0, 1.0 - listed);
    if (unseen > 0 && rest > 0.0)
      for (std::size_t i = 0; i < d.probs.size(); ++i)
        if (!seen[i]) d.probs[i] = rest / static_cast<double>(unseen);
    double total = 0.0;
    for (double p : d.probs) total += p;
    if (total <= 0.0) throw TransportError("completion response carried no usable logprobs", false);
    for (auto& p : d.probs) p /= total;
    return d;
  }

 private:
  Vocabulary vocab_;
  RemoteConfig cfg_;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.dimension == 0) throw std::invalid_argument("remote embedder needs a configured dimension");
  }

  std::size_t dimension() const override { return cfg_.dimension; }

  EmbeddingVector embed(std::string_view text) const override {
    auto resp = post_json(cfg_, "/embeddings", {{"model", cfg_.model}, {"input", std::string(text)}});
    auto v = resp.at("data").at(0).at("embedding").get<EmbeddingVector>();
    if (v.size() != cfg_.dimension)
      throw TransportError("embedding has dimension " + std::to_string(v.size()) + ", expected " +
                               std::to_string(cfg_.dimension),
                           false);
    return v;
  }

 private:
  RemoteConfig cfg_;
};

inline ParaphraseFn remote_paraphraser(RemoteConfig cfg) {
  return [cfg = std::move(cfg)](const std::string& sentence) {
    nlohmann::json body{
        {"model", cfg.model},
        {"messages",
         nlohmann::json::array(
             {{{"role", "system"},
               {"content", "Rewrite the user's sentence with the same meaning. Reply with the sentence only."}},
              {{"role", "user"}, {"content", sentence}}})}};
    auto resp = post_json(cfg, "/chat/completions", body);
    return resp.at("choices").at(0).at("message").at("content").get<std::string>();
  };
}

}  // namespace rstego
