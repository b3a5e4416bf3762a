#include "pcons/model_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "pcons/error.hpp"
#include "pcons/text_util.hpp"

namespace pcons {

using namespace std::chrono;

std::string_view to_string(ChatRole role) {
  switch (role) {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
  }
  return "user";
}

milliseconds RetryPolicy::backoff(int attempt) const {
  const double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, attempt);
  return std::min(max_backoff, milliseconds(static_cast<long long>(ms)));
}

ModelEndpoint endpoint_from_json(const nlohmann::json& j) {
  ModelEndpoint e;
  e.name = j.at("name").get<std::string>();
  if (e.name.empty()) throw Error(ErrorCode::configuration, "endpoint with empty name");
  const auto kind = j.value("kind", std::string("http_chat"));
  if (kind == "http_chat") {
    e.kind = EndpointKind::http_chat;
    e.requests_per_second = 2.0;
  } else if (kind == "scripted") {
    e.kind = EndpointKind::scripted;
  } else {
    throw Error(ErrorCode::configuration, "endpoint '" + e.name + "': unknown kind '" + kind + "'");
  }
  e.base_url = j.value("base_url", std::string());
  e.model = j.value("model", std::string());
  e.api_key_env = j.value("api_key_env", std::string());
  e.sampling.temperature = j.value("temperature", 0.7);
  if (e.sampling.temperature < 0.0) throw Error(ErrorCode::configuration, "endpoint '" + e.name + "': temperature < 0");
  e.sampling.max_tokens = j.value("max_tokens", 512);
  if (j.contains("seed")) e.sampling.seed = j.at("seed").get<std::uint64_t>();
  e.send_seed = j.value("send_seed", true);
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    e.retry.max_retries = r.value("max_retries", e.retry.max_retries);
    e.retry.initial_backoff = milliseconds(r.value("initial_backoff_ms", e.retry.initial_backoff.count()));
    e.retry.multiplier = r.value("multiplier", e.retry.multiplier);
    e.retry.max_backoff = milliseconds(r.value("max_backoff_ms", e.retry.max_backoff.count()));
  }
  e.max_concurrency = j.value("max_concurrency", e.max_concurrency);
  if (e.max_concurrency == 0) throw Error(ErrorCode::configuration, "endpoint '" + e.name + "': max_concurrency 0");
  e.requests_per_second = j.value("requests_per_second", e.requests_per_second);
  e.timeout = milliseconds(j.value("timeout_ms", e.timeout.count()));
  if (j.contains("script")) e.script = j.at("script");
  if (e.kind == EndpointKind::http_chat && e.base_url.empty())
    throw Error(ErrorCode::configuration, "endpoint '" + e.name + "': http_chat needs base_url");
  if (e.kind == EndpointKind::scripted && e.script.is_null())
    throw Error(ErrorCode::configuration, "endpoint '" + e.name + "': scripted endpoint needs a script");
  return e;
}

// ---------------------------------------------------------------------------
// HTTP backend

nlohmann::json HttpChatBackend::request_body(const ModelEndpoint& endpoint, const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages)
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  nlohmann::json body{{"model", endpoint.remote_model()},
                      {"messages", std::move(messages)},
                      {"temperature", request.temperature},
                      {"max_tokens", request.max_tokens}};
  if (request.seed && endpoint.send_seed) body["seed"] = *request.seed;
  return body;
}

std::string HttpChatBackend::parse_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw PermanentFailure("response is not JSON");
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw PermanentFailure("response has no choices");
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  if (!msg.contains("content")) throw PermanentFailure("response choice has no message content");
  if (msg["content"].is_null()) return {};
  return msg["content"].get<std::string>();
}

std::string HttpChatBackend::complete(const ModelEndpoint& endpoint, const ChatRequest& request) {
  // Split "scheme://host:port/prefix" into the client origin and a path prefix.
  std::string origin = endpoint.base_url;
  std::string prefix;
  if (auto scheme = origin.find("://"); scheme != std::string::npos) {
    if (auto slash = origin.find('/', scheme + 3); slash != std::string::npos) {
      prefix = origin.substr(slash);
      origin.resize(slash);
    }
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  const auto secs = duration_cast<seconds>(endpoint.timeout).count();
  client.set_connection_timeout(std::max<long long>(1, secs / 4));
  client.set_read_timeout(std::max<long long>(1, secs));
  client.set_write_timeout(std::max<long long>(1, secs));

  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    const char* token = std::getenv(endpoint.api_key_env.c_str());
    if (token == nullptr || *token == '\0')
      throw PermanentFailure("environment variable " + endpoint.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const auto body = request_body(endpoint, request).dump();
  auto res = client.Post(prefix + "/chat/completions", headers, body, "application/json");
  if (!res) throw TransientFailure("transport error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status == 408 || res->status >= 500)
    throw TransientFailure("HTTP " + std::to_string(res->status));
  if (res->status < 200 || res->status >= 300)
    throw PermanentFailure("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  return parse_response(res->body);
}

// ---------------------------------------------------------------------------
// Scripted backend

std::string prompt_hash(const std::vector<ChatMessage>& messages) {
  std::uint64_t h = fnv1a64("");
  for (const auto& m : messages) {
    h = fnv1a64(to_string(m.role), h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(m.content, h);
    h = fnv1a64(std::string_view("\x1e", 1), h);
  }
  return hex64(h);
}

ScriptedReply ScriptedReply::fixed(std::string text) { return ScriptedReply{{std::move(text)}, {}}; }

ScriptedReply ScriptedReply::bernoulli(double p, std::string when_true, std::string when_false) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::configuration, "bernoulli probability outside [0,1]");
  return ScriptedReply{{std::move(when_true), std::move(when_false)}, {p, 1.0 - p}};
}

ScriptedReply ScriptedReply::from_json(const nlohmann::json& j) {
  if (j.is_string()) return fixed(j.get<std::string>());
  if (j.contains("text")) return fixed(j.at("text").get<std::string>());
  if (j.contains("bernoulli")) {
    const auto& b = j.at("bernoulli");
    return bernoulli(b.at("p").get<double>(), b.at("then").get<std::string>(), b.at("else").get<std::string>());
  }
  if (j.contains("choice")) {
    ScriptedReply r;
    for (const auto& c : j.at("choice")) {
      r.texts.push_back(c.at("text").get<std::string>());
      const double w = c.value("weight", 1.0);
      if (w < 0.0) throw Error(ErrorCode::configuration, "negative choice weight in script");
      r.weights.push_back(w);
    }
    if (r.texts.empty()) throw Error(ErrorCode::configuration, "empty choice list in script");
    return r;
  }
  throw Error(ErrorCode::configuration, "unrecognized scripted reply: " + j.dump());
}

std::string ScriptedReply::draw(std::uint64_t stream) const {
  if (weights.empty()) return texts.front();
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = static_cast<double>(mix64(stream) >> 11) * 0x1.0p-53 * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    acc += weights[i];
    if (u < acc) return texts[i];
  }
  // u == total only when trailing weights are zero; pick the last positive one.
  for (std::size_t i = texts.size(); i-- > 0;)
    if (weights[i] > 0.0) return texts[i];
  return texts.back();
}

namespace {

std::string joined_field(const std::vector<ChatMessage>& messages, std::string_view field) {
  if (field == "system") {
    for (const auto& m : messages)
      if (m.role == ChatRole::system) return m.content;
    return {};
  }
  if (field == "user") {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
      if (it->role == ChatRole::user) return it->content;
    return {};
  }
  std::string all;
  for (const auto& m : messages) all += m.content + "\n";
  return all;
}

}  // namespace

bool ScriptRule::matches(const std::vector<ChatMessage>& messages) const {
  for (const auto& [field, re] : patterns)
    if (!std::regex_search(joined_field(messages, field), re)) return false;
  return true;
}

ScriptedBackend::ScriptedBackend(std::map<std::string, std::string> exact, std::vector<ScriptRule> rules,
                                 std::optional<ScriptedReply> fallback, milliseconds delay)
    : exact_(std::move(exact)), rules_(std::move(rules)), fallback_(std::move(fallback)), delay_(delay) {
  if (!fallback_) throw Error(ErrorCode::configuration, "script is not total: a default reply is required");
}

ScriptedBackend::ScriptedBackend(Fn fn) : fn_(std::move(fn)) {
  if (!fn_) throw Error(ErrorCode::configuration, "script is not total: empty response function");
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& script) {
  try {
    std::map<std::string, std::string> exact;
    if (script.contains("exact")) exact = script.at("exact").get<std::map<std::string, std::string>>();
    std::vector<ScriptRule> rules;
    if (script.contains("rules")) {
      for (const auto& r : script.at("rules")) {
        ScriptRule rule;
        auto flags = std::regex::ECMAScript;
        if (r.value("icase", false)) flags |= std::regex::icase;
        for (const auto& [field, pat] : r.at("match").items()) {
          if (field != "system" && field != "user" && field != "any")
            throw Error(ErrorCode::configuration, "script rule matches unknown field '" + field + "'");
          auto add = [&](const std::string& p) { rule.patterns.emplace_back(field, std::regex(p, flags)); };
          if (pat.is_array()) {
            for (const auto& p : pat) add(p.get<std::string>());
          } else {
            add(pat.get<std::string>());
          }
        }
        rule.reply = ScriptedReply::from_json(r.at("reply"));
        rules.push_back(std::move(rule));
      }
    }
    std::optional<ScriptedReply> fallback;
    if (script.contains("default")) fallback = ScriptedReply::from_json(script.at("default"));
    milliseconds delay{script.value("delay_ms", 0)};
    return std::make_shared<ScriptedBackend>(std::move(exact), std::move(rules), std::move(fallback), delay);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("malformed script: ") + e.what());
  } catch (const std::regex_error& e) {
    throw Error(ErrorCode::configuration, std::string("bad regex in script: ") + e.what());
  }
}

std::string ScriptedBackend::respond(const std::vector<ChatMessage>& messages, std::uint64_t seed) const {
  if (fn_) return fn_(messages, seed);
  const auto hash = prompt_hash(messages);
  if (auto it = exact_.find(hash); it != exact_.end()) return it->second;
  const std::uint64_t stream = mix64(fnv1a64(hash) ^ mix64(seed));
  for (const auto& rule : rules_)
    if (rule.matches(messages)) return rule.reply.draw(stream);
  return fallback_->draw(stream);
}

std::string ScriptedBackend::complete(const ModelEndpoint&, const ChatRequest& request) {
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  return respond(request.messages, request.seed.value_or(0));
}

ScriptedEndpoint scripted_backend(std::string name, const nlohmann::json& script) {
  ScriptedEndpoint out;
  out.endpoint.name = std::move(name);
  out.endpoint.kind = EndpointKind::scripted;
  out.endpoint.script = script;
  out.backend = ScriptedBackend::from_json(script);
  return out;
}

ScriptedEndpoint scripted_backend(std::string name, ScriptedBackend::Fn fn) {
  ScriptedEndpoint out;
  out.endpoint.name = std::move(name);
  out.endpoint.kind = EndpointKind::scripted;
  out.backend = std::make_shared<ScriptedBackend>(std::move(fn));
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

struct Gateway::Slot {
  ModelEndpoint endpoint;
  std::shared_ptr<ChatBackend> backend;
  mutable std::mutex mu;
  std::condition_variable cv;
  std::size_t in_flight = 0;
  steady_clock::time_point next_allowed{};
  EndpointStats stats;
};

Gateway::Gateway() : sleeper_([](milliseconds d) { std::this_thread::sleep_for(d); }) {}
Gateway::~Gateway() = default;

void Gateway::add_endpoint(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend) {
  if (slots_.contains(endpoint.name))
    throw Error(ErrorCode::configuration, "duplicate endpoint name '" + endpoint.name + "'");
  if (!backend) {
    if (endpoint.kind == EndpointKind::scripted)
      backend = ScriptedBackend::from_json(endpoint.script);
    else
      backend = std::make_shared<HttpChatBackend>();
  }
  auto slot = std::make_unique<Slot>();
  slot->endpoint = std::move(endpoint);
  slot->backend = std::move(backend);
  auto name = slot->endpoint.name;
  slots_.emplace(std::move(name), std::move(slot));
}

bool Gateway::has_endpoint(std::string_view name) const { return slots_.find(name) != slots_.end(); }

Gateway::Slot& Gateway::slot(std::string_view name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw Error(ErrorCode::configuration, "unknown endpoint '" + std::string(name) + "'");
  return *it->second;
}

const ModelEndpoint& Gateway::endpoint(std::string_view name) const { return slot(name).endpoint; }

EndpointStats Gateway::stats(std::string_view name) const {
  auto& s = slot(name);
  std::lock_guard lock(s.mu);
  return s.stats;
}

Completion Gateway::complete(std::string_view name, const std::vector<ChatMessage>& messages,
                             const CallOptions& options) {
  if (messages.empty())
    throw GatewayError(ErrorCode::precondition, "complete() called with an empty message list", options.key);
  auto& s = slot(name);

  {
    std::unique_lock lock(s.mu);
    s.cv.wait(lock, [&] { return s.in_flight < s.endpoint.max_concurrency; });
    ++s.in_flight;
    s.stats.peak_in_flight = std::max(s.stats.peak_in_flight, s.in_flight);
  }
  struct Release {
    Slot& s;
    ~Release() {
      {
        std::lock_guard lock(s.mu);
        --s.in_flight;
      }
      s.cv.notify_one();
    }
  } release{s};

  ChatRequest request;
  request.messages = messages;
  request.temperature = s.endpoint.sampling.temperature;
  request.max_tokens = options.max_tokens.value_or(s.endpoint.sampling.max_tokens);
  request.seed = options.seed ? options.seed : s.endpoint.sampling.seed;

  const auto started = steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    if (s.endpoint.requests_per_second > 0.0) {
      steady_clock::time_point start;
      {
        std::lock_guard lock(s.mu);
        start = std::max(steady_clock::now(), s.next_allowed);
        s.next_allowed =
            start + duration_cast<steady_clock::duration>(duration<double>(1.0 / s.endpoint.requests_per_second));
      }
      std::this_thread::sleep_until(start);
    }
    {
      std::lock_guard lock(s.mu);
      ++s.stats.requests;
    }
    try {
      Completion out;
      out.text = s.backend->complete(s.endpoint, request);
      out.retries = attempt;
      out.latency = duration_cast<milliseconds>(steady_clock::now() - started);
      spdlog::debug("endpoint={} key={} retries={} latency_ms={} chars={}", s.endpoint.name, options.key, attempt,
                    out.latency.count(), out.text.size());
      return out;
    } catch (const TransientFailure& e) {
      std::lock_guard lock(s.mu);
      if (attempt >= s.endpoint.retry.max_retries) {
        ++s.stats.failures;
        spdlog::warn("endpoint={} key={} giving up after {} retries: {}", s.endpoint.name, options.key, attempt,
                     e.what());
        throw GatewayError(ErrorCode::transport,
                           "endpoint '" + s.endpoint.name + "' failed after " + std::to_string(attempt) +
                               " retries: " + e.what(),
                           options.key);
      }
      ++s.stats.retries;
    } catch (const PermanentFailure& e) {
      {
        std::lock_guard lock(s.mu);
        ++s.stats.failures;
      }
      spdlog::warn("endpoint={} key={} permanent failure: {}", s.endpoint.name, options.key, e.what());
      throw GatewayError(ErrorCode::permanent, "endpoint '" + s.endpoint.name + "': " + e.what(), options.key);
    }
    spdlog::info("endpoint={} key={} transient failure, retry {}", s.endpoint.name, options.key, attempt + 1);
    sleeper_(s.endpoint.retry.backoff(attempt));
  }
}

}  // namespace pcons
