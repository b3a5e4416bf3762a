#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pcons {

enum class ChatRole { system, user, assistant };
std::string_view to_string(ChatRole role);

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

enum class EndpointKind { http_chat, scripted };

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;
};

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{16000};

  std::chrono::milliseconds backoff(int attempt) const;
};

struct ModelEndpoint {
  std::string name;
  EndpointKind kind = EndpointKind::http_chat;
  std::string base_url;      // e.g. http://localhost:8000/v1
  std::string model;         // remote model id; defaults to name
  std::string api_key_env;   // environment variable holding the bearer token
  SamplingParams sampling;
  bool send_seed = true;     // include "seed" in the request body
  RetryPolicy retry;
  std::size_t max_concurrency = 4;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  std::chrono::milliseconds timeout{120000};
  nlohmann::json script;     // scripted endpoints only

  const std::string& remote_model() const { return model.empty() ? name : model; }
};

ModelEndpoint endpoint_from_json(const nlohmann::json& j);

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;
};

/// Backend failures. Transient ones are retried by the gateway.
class TransientFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class PermanentFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ModelEndpoint& endpoint, const ChatRequest& request) = 0;
};

/// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatBackend : public ChatBackend {
 public:
  std::string complete(const ModelEndpoint& endpoint, const ChatRequest& request) override;

  static nlohmann::json request_body(const ModelEndpoint& endpoint, const ChatRequest& request);
  /// Extracts choices[0].message.content; throws PermanentFailure otherwise.
  static std::string parse_response(std::string_view body);
};

/// Stable hash of a message list, hex-encoded.
std::string prompt_hash(const std::vector<ChatMessage>& messages);

/// A reply that is either fixed or drawn from a categorical distribution.
/// Draws are a pure function of (messages, seed).
struct ScriptedReply {
  std::vector<std::string> texts;
  std::vector<double> weights;  // empty -> single fixed text

  static ScriptedReply fixed(std::string text);
  static ScriptedReply bernoulli(double p, std::string when_true, std::string when_false);
  static ScriptedReply from_json(const nlohmann::json& j);

  std::string draw(std::uint64_t stream) const;
};

struct ScriptRule {
  /// All patterns must match (ECMAScript regex search). Keys: system, user
  /// (last user message), any (every message joined).
  std::vector<std::pair<std::string, std::regex>> patterns;
  ScriptedReply reply;

  bool matches(const std::vector<ChatMessage>& messages) const;
};

/// Deterministic mock backend. A script must be total: every request maps to
/// a reply, so a default reply is mandatory unless a function rule is used.
class ScriptedBackend : public ChatBackend {
 public:
  using Fn = std::function<std::string(const std::vector<ChatMessage>&, std::uint64_t seed)>;

  ScriptedBackend(std::map<std::string, std::string> exact, std::vector<ScriptRule> rules,
                  std::optional<ScriptedReply> fallback, std::chrono::milliseconds delay = {});
  explicit ScriptedBackend(Fn fn);

  /// Script JSON: {"exact": {hash: text}, "rules": [{"match": {...}, "reply": ...}],
  /// "default": reply, "delay_ms": n}
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& script);

  std::string complete(const ModelEndpoint& endpoint, const ChatRequest& request) override;
  std::string respond(const std::vector<ChatMessage>& messages, std::uint64_t seed) const;

 private:
  std::map<std::string, std::string> exact_;
  std::vector<ScriptRule> rules_;
  std::optional<ScriptedReply> fallback_;
  Fn fn_;
  std::chrono::milliseconds delay_{0};
};

/// Endpoint plus backend for a scripted mock.
struct ScriptedEndpoint {
  ModelEndpoint endpoint;
  std::shared_ptr<ChatBackend> backend;
};
ScriptedEndpoint scripted_backend(std::string name, const nlohmann::json& script);
ScriptedEndpoint scripted_backend(std::string name, ScriptedBackend::Fn fn);

struct CallOptions {
  std::string key;  // idempotency key of the calling unit
  std::optional<std::uint64_t> seed;
  std::optional<int> max_tokens;
};

struct Completion {
  std::string text;
  int retries = 0;
  std::chrono::milliseconds latency{0};
};

struct EndpointStats {
  std::size_t requests = 0;
  std::size_t retries = 0;
  std::size_t failures = 0;
  std::size_t peak_in_flight = 0;
};

/// Thread-safe facade over named endpoints with retries, rate limiting and a
/// per-endpoint bound on in-flight requests.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway();
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void add_endpoint(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend = nullptr);
  bool has_endpoint(std::string_view name) const;
  const ModelEndpoint& endpoint(std::string_view name) const;

  /// Replaces the backoff sleep (tests use a no-op to avoid waiting).
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  Completion complete(std::string_view endpoint, const std::vector<ChatMessage>& messages,
                      const CallOptions& options = {});

  EndpointStats stats(std::string_view endpoint) const;

 private:
  struct Slot;
  Slot& slot(std::string_view name) const;

  std::map<std::string, std::unique_ptr<Slot>, std::less<>> slots_;
  Sleeper sleeper_;
};

}  // namespace pcons
