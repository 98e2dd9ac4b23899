#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "diffadapt/backend.hpp"
#include "diffadapt/io.hpp"
#include "support/testing.hpp"

using namespace diffadapt;
using nlohmann::json;

namespace {

// In-process OpenAI-compatible server with scripted failures.
class MockServer {
 public:
  MockServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = json::parse(req.body);
      last_auth = req.get_header_value("Authorization");
      const int call = ++calls;
      if (call <= fail_first) {
        res.status = fail_status;
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[0.5,-1.0,2.0]}]})", "application/json");
    });
    server_.Get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  json reply;
  json last_body;
  std::string last_auth;
  std::atomic<int> calls{0};
  int fail_first = 0;
  int fail_status = 503;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json completion_with_logprobs() {
  return json::parse(R"({
    "choices": [{
      "message": {"content": "so \\boxed{4}"},
      "finish_reason": "stop",
      "logprobs": {"content": [
        {"token": "so", "logprob": -0.6931471805599453,
         "top_logprobs": [{"token": "so", "logprob": -0.6931471805599453},
                          {"token": "thus", "logprob": -1.3862943611198906}]},
        {"token": " 4", "logprob": 0.0,
         "top_logprobs": [{"token": " 4", "logprob": 0.0}]}
      ]}
    }],
    "usage": {"completion_tokens": 2}
  })");
}

OpenAIConfig fast_config(const std::string& url) {
  OpenAIConfig c;
  c.base_url = url + "/v1";
  c.model = "m";
  c.api_key = "secret";
  c.retry.backoff = {std::chrono::milliseconds(1)};
  c.timeout = std::chrono::seconds(10);
  return c;
}

}  // namespace

TEST(ParseChatCompletion, StepsAndEntropy) {
  const Problem p("p", "q", "4");
  CompletionRequest req;
  req.logprobs_top_k = 2;
  req.max_tokens = 10;
  const auto r = parse_chat_completion(completion_with_logprobs().dump(), p, req, TailMode::kTailBucket);
  ASSERT_EQ(r.steps().size(), 2u);
  EXPECT_EQ(r.completion_tokens(), 2);
  const double h0 = static_cast<double>(testing_support::reference_entropy({0.5L, 0.25L, 0.25L}));
  EXPECT_NEAR(r.steps()[0].entropy_nats(), h0, 1e-12);
  EXPECT_EQ(r.steps()[1].entropy_nats(), 0.0);
  EXPECT_NEAR(*r.generation_entropy(), h0 / 2.0, 1e-12);
  EXPECT_EQ(r.finish_reason(), FinishReason::kStop);
  EXPECT_FALSE(r.verdict().has_value());

  const auto renorm = parse_chat_completion(completion_with_logprobs().dump(), p, req, TailMode::kRenormalize);
  EXPECT_NEAR(renorm.steps()[0].entropy_nats(),
              static_cast<double>(testing_support::reference_entropy({2.0L / 3, 1.0L / 3})), 1e-12);
}

TEST(ParseChatCompletion, NoLogprobsAndBudget) {
  const Problem p("p", "q", "4");
  CompletionRequest req;
  req.logprobs_top_k = 0;
  req.max_tokens = 5;
  const auto r = parse_chat_completion(completion_with_logprobs().dump(), p, req, TailMode::kTailBucket);
  EXPECT_FALSE(r.has_steps());
  EXPECT_FALSE(r.generation_entropy().has_value());
  EXPECT_EQ(r.completion_tokens(), 2);

  json over = completion_with_logprobs();
  over["usage"]["completion_tokens"] = 9;
  EXPECT_THROW(parse_chat_completion(over.dump(), p, req, TailMode::kTailBucket), BackendError);
  EXPECT_THROW(parse_chat_completion("{}", p, req, TailMode::kTailBucket), BackendError);
  EXPECT_THROW(parse_chat_completion("not json", p, req, TailMode::kTailBucket), BackendError);

  json length = completion_with_logprobs();
  length["choices"][0]["finish_reason"] = "length";
  EXPECT_EQ(parse_chat_completion(length.dump(), p, req, TailMode::kTailBucket).finish_reason(), FinishReason::kLength);
}

TEST(OpenAIBackend, RequestShape) {
  MockServer server;
  server.reply = completion_with_logprobs();
  OpenAIBackend backend(fast_config(server.url()));
  const Problem p("p", "What is 2+2?", "4");
  CompletionRequest req;
  req.prompt_prefix = "Be brief.";
  req.close_reasoning_block = true;
  req.temperature = 0.5;
  req.max_tokens = 400;
  req.logprobs_top_k = 20;
  req.seed = 3;
  req.strategy = StrategyId::kEasy;
  const auto r = backend.complete(p, req);
  EXPECT_EQ(r.strategy_id(), StrategyId::kEasy);
  EXPECT_EQ(r.completion_tokens(), 2);
  const json& body = server.last_body;
  EXPECT_EQ(body["model"], "m");
  EXPECT_EQ(body["temperature"], 0.5);
  EXPECT_EQ(body["max_tokens"], 400);
  EXPECT_EQ(body["top_logprobs"], 20);
  EXPECT_EQ(body["logprobs"], true);
  EXPECT_FALSE(body.contains("top_p"));
  EXPECT_TRUE(body.contains("seed"));
  ASSERT_EQ(body["messages"].size(), 2u);
  EXPECT_EQ(body["messages"][0]["content"], "What is 2+2?");
  EXPECT_EQ(body["messages"][1]["role"], "assistant");
  EXPECT_EQ(body["messages"][1]["content"], "<think>\nBe brief.\n</think>\n");
  EXPECT_EQ(server.last_auth, "Bearer secret");

  // Same seed, same derived wire seed.
  const auto seed1 = body["seed"];
  backend.complete(p, req);
  EXPECT_EQ(server.last_body["seed"], seed1);
  EXPECT_TRUE(backend.reachable());
}

TEST(OpenAIBackend, RetriesTransientFailures) {
  MockServer server;
  server.reply = completion_with_logprobs();
  server.fail_first = 2;
  OpenAIBackend backend(fast_config(server.url()));
  CompletionRequest req;
  req.max_tokens = 10;
  EXPECT_NO_THROW(backend.complete(Problem("p", "q", "4"), req));
  EXPECT_EQ(server.calls.load(), 3);
}

TEST(OpenAIBackend, GivesUpAfterAttempts) {
  MockServer server;
  server.reply = completion_with_logprobs();
  server.fail_first = 10;
  OpenAIBackend backend(fast_config(server.url()));
  CompletionRequest req;
  req.max_tokens = 10;
  EXPECT_THROW(backend.complete(Problem("p", "q", "4"), req), BackendError);
  EXPECT_EQ(server.calls.load(), 3);
}

TEST(OpenAIBackend, ClientErrorsAreNotRetried) {
  MockServer server;
  server.reply = completion_with_logprobs();
  server.fail_first = 10;
  server.fail_status = 400;
  OpenAIBackend backend(fast_config(server.url()));
  CompletionRequest req;
  req.max_tokens = 10;
  EXPECT_THROW(backend.complete(Problem("p", "q", "4"), req), BackendError);
  EXPECT_EQ(server.calls.load(), 1);
}

TEST(OpenAIBackend, UnreachableServer) {
  OpenAIConfig c = fast_config("http://127.0.0.1:1");
  c.retry.attempts = 2;
  OpenAIBackend backend(c);
  CompletionRequest req;
  EXPECT_THROW(backend.complete(Problem("p", "q", "4"), req), BackendError);
  EXPECT_FALSE(backend.reachable());
  EXPECT_THROW(OpenAIBackend(OpenAIConfig{"localhost:8000"}), ValidationError);
}

TEST(EmbeddingsProvider, ReturnsVector) {
  MockServer server;
  auto client = std::make_shared<OpenAIBackend>(fast_config(server.url()));
  EmbeddingsProvider provider(client);
  EXPECT_EQ(provider.represent(Problem("p", "q", "4")), FeatureVector({0.5, -1.0, 2.0}));
  EXPECT_EQ(provider.fingerprint(), "embeddings:m");
}

TEST(FeatureFile, RoundTripAndLookup) {
  testing_support::ScratchDir dir("ff");
  FeatureFile f(4, {{"model", "toy"}, {"position_rule", "last_prompt_token"}});
  const std::vector<double> q1{0.1, 0.2, 0.3, 0.4};
  f.add("q1", q1);
  f.add("q2", std::vector<float>{1, 2, 3, 4});
  f.write(dir / "f.dffv");
  const auto g = FeatureFile::read(dir / "f.dffv");
  EXPECT_EQ(g.entries(), f.entries());
  EXPECT_EQ(g.trailer(), f.trailer());
  EXPECT_EQ(g.fingerprint(), f.fingerprint());
  const auto v = g.lookup("q1");
  EXPECT_EQ(v.dim(), 4u);
  EXPECT_EQ(v[0], static_cast<double>(0.1f));
  EXPECT_THROW(g.lookup("nope"), LookupError);
  EXPECT_THROW(f.add("q1", q1), ValidationError);
  EXPECT_THROW(f.add("q3", std::vector<double>{1.0}), ValidationError);

  FeatureFileProvider provider(g);
  EXPECT_EQ(provider.represent(Problem("q2", "x", "1")), FeatureVector({1, 2, 3, 4}));
  EXPECT_THROW(provider.represent(Problem("q9", "x", "1")), LookupError);
}

TEST(FeatureFile, HeaderLayoutAndErrors) {
  FeatureFile f(2);
  f.add("a", std::vector<float>{1.0f, -1.0f});
  const std::string bytes = f.encode();
  ASSERT_GE(bytes.size(), 16u + 4 + 1 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "DFFV");
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 2u);
  EXPECT_EQ(u32(12), 1u);
  EXPECT_EQ(u32(16), 1u);
  EXPECT_EQ(bytes[20], 'a');

  std::string bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(FeatureFile::decode(bad), FormatError);
  EXPECT_THROW(FeatureFile::decode(bytes.substr(0, 22)), FormatError);
  std::string v2 = bytes;
  v2[4] = 2;
  EXPECT_THROW(FeatureFile::decode(v2), FormatError);
  EXPECT_THROW(FeatureFile::decode(bytes + "[1,2]"), FormatError);
  EXPECT_EQ(FeatureFile::decode(bytes + R"({"model":"m"})").trailer()["model"], "m");
}

TEST(DisabledProvider, AlwaysThrows) {
  DisabledProvider d;
  EXPECT_THROW(d.represent(Problem("p", "q", "1")), BackendError);
  EXPECT_EQ(d.fingerprint(), "disabled");
}
