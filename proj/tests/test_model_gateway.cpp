#include <atomic>
#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "pcons/error.hpp"
#include "pcons/model_gateway.hpp"
#include "pcons/parallel.hpp"

using namespace pcons;
using namespace std::chrono_literals;

namespace {

std::vector<ChatMessage> msgs(std::string system, std::string user) {
  return {{ChatRole::system, std::move(system)}, {ChatRole::user, std::move(user)}};
}

/// Fails with the given exception type `failures` times, then answers.
template <class Failure>
class FlakyBackend : public ChatBackend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  std::string complete(const ModelEndpoint&, const ChatRequest&) override {
    if (calls_.fetch_add(1) < failures_) throw Failure("injected");
    return "recovered";
  }
  int calls() const { return calls_.load(); }

 private:
  int failures_;
  std::atomic<int> calls_{0};
};

ModelEndpoint named(std::string name) {
  ModelEndpoint e;
  e.name = std::move(name);
  e.kind = EndpointKind::scripted;
  return e;
}

}  // namespace

TEST(Scripted, ExactPromptHashDeterminism) {
  const auto m = msgs("You are a character who is happy", "How are you?");
  Gateway gw;
  gw.add_endpoint(
      scripted_backend("s", nlohmann::json{{"exact", {{prompt_hash(m), "I feel wonderful today"}}}, {"default", "?"}})
          .endpoint);
  EXPECT_EQ(gw.complete("s", m).text, "I feel wonderful today");
  EXPECT_EQ(gw.complete("s", msgs("x", "y")).text, "?");
}

TEST(Scripted, AlwaysAnswerSeven) {
  auto b = ScriptedBackend::from_json({{"rules", {{{"match", {{"user", "scale"}}}, {"reply", "7"}}}}, {"default", "no"}});
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(b->respond(msgs("p", "Rate on a scale from 1 to 7: item " + std::to_string(i)), i), "7");
}

TEST(Scripted, BernoulliOneIsAlwaysTrue) {
  auto b = ScriptedBackend::from_json({{"default", {{"bernoulli", {{"p", 1.0}, {"then", "happy"}, {"else", "sad"}}}}}});
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_EQ(b->respond(msgs("p", "q"), s), "happy");
}

TEST(Scripted, SeededBernoulliIsReproducible) {
  auto b = ScriptedBackend::from_json({{"default", {{"bernoulli", {{"p", 0.75}, {"then", "H"}, {"else", "S"}}}}}});
  std::string first, second;
  for (std::uint64_t s = 0; s < 200; ++s) first += b->respond(msgs("p", "q"), s);
  for (std::uint64_t s = 0; s < 200; ++s) second += b->respond(msgs("p", "q"), s);
  EXPECT_EQ(first, second);
  const auto hs = std::count(first.begin(), first.end(), 'H');
  EXPECT_GT(hs, 120);
  EXPECT_LT(hs, 180);
}

TEST(Scripted, NonTotalScriptRejected) {
  EXPECT_THROW(ScriptedBackend::from_json({{"rules", {{{"match", {{"user", "x"}}}, {"reply", "y"}}}}}), Error);
}

TEST(Gateway, EmptyMessagesIsPrecondition) {
  Gateway gw;
  gw.add_endpoint(scripted_backend("s", nlohmann::json{{"default", "x"}}).endpoint);
  try {
    gw.complete("s", {}, {.key = "k1"});
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition);
    EXPECT_EQ(e.key(), "k1");
  }
}

TEST(Gateway, TransientFailuresAreRetried) {
  Gateway gw;
  std::vector<std::chrono::milliseconds> waits;
  gw.set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d); });
  auto backend = std::make_shared<FlakyBackend<TransientFailure>>(2);
  gw.add_endpoint(named("f"), backend);
  const auto out = gw.complete("f", msgs("s", "u"));
  EXPECT_EQ(out.text, "recovered");
  EXPECT_EQ(out.retries, 2);
  EXPECT_EQ(gw.stats("f").retries, 2u);
  ASSERT_EQ(waits.size(), 2u);
  EXPECT_LT(waits[0], waits[1]);
}

TEST(Gateway, ExhaustedRetriesIsTransportError) {
  Gateway gw;
  gw.set_sleeper([](std::chrono::milliseconds) {});
  auto ep = named("f");
  ep.retry.max_retries = 3;
  auto backend = std::make_shared<FlakyBackend<TransientFailure>>(100);
  gw.add_endpoint(ep, backend);
  try {
    gw.complete("f", msgs("s", "u"), {.key = "unit-7"});
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport);
    EXPECT_EQ(e.key(), "unit-7");
  }
  EXPECT_EQ(backend->calls(), 4);
}

TEST(Gateway, PermanentFailureIsNotRetried) {
  Gateway gw;
  gw.set_sleeper([](std::chrono::milliseconds) {});
  auto backend = std::make_shared<FlakyBackend<PermanentFailure>>(100);
  gw.add_endpoint(named("f"), backend);
  try {
    gw.complete("f", msgs("s", "u"), {.key = "unit-8"});
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), ErrorCode::permanent);
  }
  EXPECT_EQ(backend->calls(), 1);
}

TEST(Gateway, BackoffIsCapped) {
  RetryPolicy p;
  EXPECT_EQ(p.backoff(0), 500ms);
  EXPECT_EQ(p.backoff(1), 1000ms);
  EXPECT_EQ(p.backoff(20), p.max_backoff);
}

TEST(Gateway, InFlightBoundIsRespected) {
  Gateway gw;
  auto ep = named("slow");
  ep.max_concurrency = 3;
  auto backend = scripted_backend("slow", [](const std::vector<ChatMessage>&, std::uint64_t) {
    std::this_thread::sleep_for(5ms);
    return std::string("ok");
  });
  gw.add_endpoint(ep, backend.backend);
  parallel_for(24, 8, [&](std::size_t) { gw.complete("slow", msgs("s", "u")); });
  EXPECT_EQ(gw.stats("slow").requests, 24u);
  EXPECT_LE(gw.stats("slow").peak_in_flight, 3u);
  EXPECT_GE(gw.stats("slow").peak_in_flight, 2u);
}

TEST(Gateway, UnknownEndpointAndDuplicates) {
  Gateway gw;
  gw.add_endpoint(scripted_backend("s", nlohmann::json{{"default", "x"}}).endpoint);
  EXPECT_THROW(gw.add_endpoint(scripted_backend("s", nlohmann::json{{"default", "x"}}).endpoint), Error);
  EXPECT_THROW(gw.complete("nope", msgs("s", "u")), Error);
}

TEST(HttpBackend, RequestBodyShape) {
  ModelEndpoint e;
  e.name = "local";
  e.model = "remote-model";
  ChatRequest r;
  r.messages = msgs("sys", "hi");
  r.seed = 42;
  r.max_tokens = 64;
  const auto body = HttpChatBackend::request_body(e, r);
  EXPECT_EQ(body["model"], "remote-model");
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "hi");
  EXPECT_EQ(body["seed"], 42);
  EXPECT_EQ(body["max_tokens"], 64);
}

TEST(HttpBackend, ParseResponse) {
  EXPECT_EQ(HttpChatBackend::parse_response(R"({"choices":[{"message":{"role":"assistant","content":"hey"}}]})"),
            "hey");
  EXPECT_THROW(HttpChatBackend::parse_response(R"({"choices":[]})"), PermanentFailure);
  EXPECT_THROW(HttpChatBackend::parse_response("not json"), PermanentFailure);
}

namespace {

/// Local OpenAI-compatible server: fails the first `fail_first` requests
/// with `fail_status`, then echoes the last user message.
class LocalServer {
 public:
  LocalServer(int fail_first, int fail_status) {
    server_.Post("/v1/chat/completions", [this, fail_first, fail_status](const httplib::Request& req,
                                                                         httplib::Response& res) {
      auth_ = req.get_header_value("Authorization");
      if (hits_.fetch_add(1) < fail_first) {
        res.status = fail_status;
        res.set_content(R"({"error":"nope"})", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"},
                                                       {"content", "echo: " + body["messages"].back()["content"].get<std::string>()}}}}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int hits() const { return hits_.load(); }
  std::string auth() const { return auth_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  std::string auth_;
};

ModelEndpoint http_endpoint(const std::string& url) {
  ModelEndpoint e;
  e.name = "http";
  e.base_url = url;
  e.timeout = 5000ms;
  return e;
}

}  // namespace

TEST(HttpBackend, RoundTripWithBearerToken) {
  LocalServer server(0, 200);
  ::setenv("PCONS_TEST_TOKEN", "secret-token", 1);
  auto e = http_endpoint(server.base_url());
  e.api_key_env = "PCONS_TEST_TOKEN";
  Gateway gw;
  gw.add_endpoint(e);
  EXPECT_EQ(gw.complete("http", msgs("s", "ping")).text, "echo: ping");
  EXPECT_EQ(server.auth(), "Bearer secret-token");
}

TEST(HttpBackend, ServerErrorsAreRetried) {
  LocalServer server(2, 503);
  Gateway gw;
  gw.set_sleeper([](std::chrono::milliseconds) {});
  gw.add_endpoint(http_endpoint(server.base_url()));
  const auto out = gw.complete("http", msgs("s", "ping"));
  EXPECT_EQ(out.retries, 2);
  EXPECT_EQ(server.hits(), 3);
}

TEST(HttpBackend, ClientErrorIsPermanent) {
  LocalServer server(100, 400);
  Gateway gw;
  gw.set_sleeper([](std::chrono::milliseconds) {});
  gw.add_endpoint(http_endpoint(server.base_url()));
  try {
    gw.complete("http", msgs("s", "ping"));
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), ErrorCode::permanent);
  }
  EXPECT_EQ(server.hits(), 1);
}

TEST(HttpBackend, MissingTokenVariableIsPermanent) {
  LocalServer server(0, 200);
  ::unsetenv("PCONS_TEST_MISSING_TOKEN");
  auto e = http_endpoint(server.base_url());
  e.api_key_env = "PCONS_TEST_MISSING_TOKEN";
  Gateway gw;
  gw.add_endpoint(e);
  EXPECT_THROW(gw.complete("http", msgs("s", "ping")), GatewayError);
  EXPECT_EQ(server.hits(), 0);
}
