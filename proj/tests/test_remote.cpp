#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "rstego/rstego.hpp"

using namespace rstego;

namespace {

// Local OpenAI-shaped mock. /v1/completions fails with 503 for the first
// `fail_first` calls.
class MockServer {
 public:
  explicit MockServer(int fail_first = 0) : fail_first_(fail_first) {
    svr_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      last_body = nlohmann::json::parse(req.body);
      last_auth = req.get_header_value("Authorization");
      if (calls <= fail_first_) {
        res.status = 503;
        return;
      }
      nlohmann::json top{{" alpha", std::log(0.5)}, {"beta", std::log(0.3)}, {"not-in-vocab", std::log(0.1)}};
      nlohmann::json body{{"choices", {{{"logprobs", {{"top_logprobs", {top}}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    svr_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      auto in = nlohmann::json::parse(req.body).at("input").get<std::string>();
      nlohmann::json body{{"data", {{{"embedding", {static_cast<double>(in.size()), 1.0, 0.0}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    svr_.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
      auto j = nlohmann::json::parse(req.body);
      std::string s = j.at("messages").at(1).at("content").get<std::string>();
      nlohmann::json body{{"choices", {{{"message", {{"content", " REWRITTEN " + s + " "}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    svr_.Post("/v1/bad", [](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content("nope", "text/plain");
    });
    svr_.Post("/v1/garbage", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{not json", "application/json");
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~MockServer() {
    svr_.stop();
    thread_.join();
  }

  RemoteConfig config() const {
    RemoteConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    c.model = "mock";
    c.backoff_ms = 1;
    c.max_retries = 3;
    c.timeout_seconds = 5;
    c.api_key_env = "RSTEGO_TEST_KEY";
    return c;
  }

  std::atomic<int> calls{0};
  nlohmann::json last_body;
  std::string last_auth;

 private:
  httplib::Server svr_;
  int port_ = 0;
  int fail_first_;
  std::thread thread_;
};

Vocabulary small_vocab() { return Vocabulary::parse("alpha\nbeta\ngamma\ndelta\nter", 4); }

}  // namespace

TEST(Remote, LogprobsBecomeDistribution) {
  MockServer mock;
  RemoteLanguageModel m(small_vocab(), mock.config());
  std::vector<TokenId> prior{1};
  auto d = m.next_distribution("hello", prior);
  ASSERT_EQ(d.probs.size(), 5u);
  // 0.5 and 0.3 listed; the leftover 0.2 (the unknown token's 0.1 included)
  // is split over the three unlisted vocabulary entries.
  EXPECT_NEAR(d.probs[0], 0.5, 1e-12);
  EXPECT_NEAR(d.probs[1], 0.3, 1e-12);
  for (int i = 2; i < 5; ++i) EXPECT_NEAR(d.probs[i], 0.2 / 3, 1e-12);
  EXPECT_EQ(mock.last_body.at("prompt").get<std::string>(), "hello\n\nbeta");
  EXPECT_EQ(mock.last_body.at("max_tokens").get<int>(), 1);
}

TEST(Remote, RetriesTransientFailures) {
  MockServer mock(2);
  RemoteLanguageModel m(small_vocab(), mock.config());
  auto d = m.next_distribution("x", {});
  EXPECT_EQ(mock.calls.load(), 3);
  EXPECT_NEAR(d.probs[0], 0.5, 1e-12);

  MockServer down(100);
  RemoteLanguageModel m2(small_vocab(), down.config());
  try {
    m2.next_distribution("x", {});
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_FALSE(e.retryable());
    EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
  }
  EXPECT_EQ(down.calls.load(), 4);
}

TEST(Remote, ClientErrorsAreNotRetried) {
  MockServer mock;
  EXPECT_THROW(post_json(mock.config(), "/bad", {}), TransportError);
  EXPECT_THROW(post_json(mock.config(), "/garbage", {}), TransportError);
  RemoteConfig empty;
  EXPECT_THROW(post_json(empty, "/x", {}), std::invalid_argument);
}

TEST(Remote, UnreachableEndpointFails) {
  RemoteConfig c;
  c.endpoint = "http://127.0.0.1:1";
  c.max_retries = 1;
  c.backoff_ms = 1;
  c.timeout_seconds = 1;
  EXPECT_THROW(post_json(c, "/completions", {}), TransportError);
}

TEST(Remote, SendsBearerToken) {
  MockServer mock;
  ::setenv("RSTEGO_TEST_KEY", "secret", 1);
  RemoteLanguageModel m(small_vocab(), mock.config());
  m.next_distribution("x", {});
  ::unsetenv("RSTEGO_TEST_KEY");
  EXPECT_EQ(mock.last_auth, "Bearer secret");
}

TEST(Remote, Embeddings) {
  MockServer mock;
  auto cfg = mock.config();
  cfg.dimension = 3;
  RemoteEmbedder e(cfg);
  auto v = e.embed("abcd");
  EXPECT_EQ(v, (EmbeddingVector{4.0, 1.0, 0.0}));
  cfg.dimension = 5;
  EXPECT_THROW(RemoteEmbedder(cfg).embed("abcd"), TransportError);
  cfg.dimension = 0;
  EXPECT_THROW(RemoteEmbedder{cfg}, std::invalid_argument);
}

TEST(Remote, ParaphraseAttack) {
  MockServer mock;
  AttackConfig a;
  a.kind = AttackKind::paraphrase;
  a.paraphraser = Paraphraser::remote;
  a.fraction = 1.0;
  Attacker attacker(a, remote_paraphraser(mock.config()));
  EXPECT_EQ(attacker.apply("One. Two."), "REWRITTEN One. REWRITTEN Two.");
  EXPECT_THROW(paraphrase("One.", a, default_rule_table()), std::invalid_argument);
}

TEST(Remote, ConfigJson) {
  RemoteConfig c;
  c.endpoint = "https://api.example.com";
  c.model = "m";
  c.dimension = 7;
  auto back = RemoteConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(RemoteConfig::from_json(nlohmann::json::object()), nlohmann::json::exception);
}
