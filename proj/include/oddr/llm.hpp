#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oddr/dispatch.hpp"
#include "oddr/reposition.hpp"
#include "oddr/valuation.hpp"

namespace oddr::llm {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8080/v1";  // chat completions live at <base_url>/chat/completions
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "ODDR_LLM_API_KEY";
  double timeout_s = 30.0;
  int max_retries = 2;
  int batch_size = 30;
  int max_in_flight = 4;
  double temperature = 0.0;
  double backoff_initial_s = 1.0;  // doubles on every retry

  void validate() const;
};

class TemplateError : public std::runtime_error {
 public:
  TemplateError(std::string field, const std::string& what)
      : std::runtime_error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Retries exhausted on timeouts, connection failures or 5xx responses.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The model's reply could not be turned into a valid payload.
class ParseError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// 4xx from the endpoint, or a missing key. Not retried and not recoverable.
class AuthError : public std::runtime_error {
 public:
  AuthError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// -- templating ----------------------------------------------------------

enum class Schema { kScorer, kReviewer, kDispatcher, kRepositioner };
std::string_view to_string(Schema s);

struct PromptTemplate {
  std::string name;
  std::string system;
  std::string body;
  Schema schema;
};

const PromptTemplate& scorer_template();
const PromptTemplate& reviewer_template();
const PromptTemplate& dispatcher_template();
const PromptTemplate& repositioner_template();

using Row = std::map<std::string, std::string>;

struct TemplateContext {
  Row values;
  std::map<std::string, std::vector<Row>> lists;
};

/// Mustache-style substitution: `{{name}}` and repeated sections
/// `{{#list}}...{{/list}}` whose rows shadow outer values. Throws
/// TemplateError naming the first missing field.
std::string render(std::string_view text, const TemplateContext& ctx);
std::string render(const PromptTemplate& t, const TemplateContext& ctx);

/// Fixed-precision number formatting used in prompts.
std::string fixed(double v, int decimals);

// -- transport ------------------------------------------------------------

/// Thread-safe collector for retry notes destined for the decisions log.
class EventSink {
 public:
  void add(std::string note);
  std::vector<std::string> drain();

 private:
  std::mutex mu_;
  std::vector<std::string> notes_;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// One completion; returns the assistant text.
  virtual std::string complete(std::string_view system, std::string_view user) = 0;
};

/// Chat-completions over HTTP(S). Safe to call from several threads.
class HttpChatClient final : public ChatTransport {
 public:
  HttpChatClient(EndpointConfig cfg, std::string api_key, EventSink* sink = nullptr);
  std::string complete(std::string_view system, std::string_view user) override;

  /// Number of HTTP requests issued so far (including retries).
  int requests() const;

 private:
  EndpointConfig cfg_;
  std::string api_key_;
  std::string scheme_host_port_;
  std::string path_;
  EventSink* sink_;
  mutable std::mutex mu_;
  int requests_ = 0;
};

/// Reads the API key from the configured environment variable; throws
/// AuthError when it is unset or empty.
std::string api_key_from_env(const EndpointConfig& cfg);

/// In-process transport for tests and offline experiments.
class FunctionTransport final : public ChatTransport {
 public:
  using Fn = std::function<std::string(std::string_view system, std::string_view user)>;
  explicit FunctionTransport(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(std::string_view system, std::string_view user) override;
  int calls() const;

 private:
  Fn fn_;
  mutable std::mutex mu_;
  int calls_ = 0;
};

// -- response parsing -----------------------------------------------------

/// The first balanced `{...}` in `raw` that parses as JSON.
std::optional<std::string> extract_json_object(std::string_view raw);

ValueMap parse_scores(std::string_view raw, std::span<const OrderId> expected);
ReviewMap parse_review(std::string_view raw, std::span<const OrderId> expected);
DriverId parse_driver_choice(std::string_view raw);
RegionId parse_region_choice(std::string_view raw);

using Payload = std::variant<ValueMap, ReviewMap, DriverId, RegionId>;
/// Dispatches to the typed parsers; throws ParseError listing offenders.
Payload parse_response(Schema schema, std::string_view raw, std::span<const OrderId> expected = {});

// -- policies -------------------------------------------------------------

class LlmValuation final : public ValuationBackend {
 public:
  LlmValuation(ChatTransport& transport, EndpointConfig cfg, EventSink* sink = nullptr);
  std::string_view name() const override { return "llm"; }
  ValueMap score(std::span<const OrderSnapshot> batch, std::span<const OrderSnapshot> all,
                 const ScorerConstraints& c, const RescoreMap* prior) override;
  ReviewMap review(std::span<const OrderSnapshot> all, const ValueMap& values) override;

 private:
  ValueMap score_chunk(std::span<const OrderSnapshot> chunk, const ScorerConstraints& c, const RescoreMap* prior);

  ChatTransport& transport_;
  EndpointConfig cfg_;
  EventSink* sink_;
};

class LlmDispatcher final : public DriverChooser {
 public:
  explicit LlmDispatcher(ChatTransport& transport) : transport_(transport) {}
  std::string_view name() const override { return "llm"; }
  DriverId choose(const DispatchQuery& q, std::string_view correction) override;

 private:
  ChatTransport& transport_;
};

class LlmRepositioner final : public RegionChooser {
 public:
  LlmRepositioner(ChatTransport& transport, FeatureWindows windows = {})
      : transport_(transport), windows_(windows) {}
  std::string_view name() const override { return "llm"; }
  RegionId choose(const Driver& driver, std::span<const RegionFeatures> candidates,
                  std::string_view correction) override;

 private:
  ChatTransport& transport_;
  FeatureWindows windows_;
};

// -- stub server ----------------------------------------------------------

struct StubReply {
  int status = 200;
  std::string content;             // assistant text for 2xx replies
  std::optional<std::string> raw;  // when set, sent verbatim as the HTTP body
  int delay_ms = 0;
};

struct StubRule {
  std::string contains;  // matched against the user message; empty matches all
  std::vector<StubReply> replies;  // consumed in order; the last one repeats
};

/// Scripted request -> response transcript. JSON form:
///   {"rules": [{"contains": "...", "replies": [{"status": 200, "content": "..."}]}],
///    "default": {"status": 200, "content": "..."}}
struct Transcript {
  std::vector<StubRule> rules;
  StubReply fallback{200, "{}", std::nullopt, 0};

  static Transcript from_json(std::string_view text);
};

/// Local chat-completions server driven by a transcript or a responder
/// function. Listens on 127.0.0.1 on an ephemeral port until destroyed.
class StubServer {
 public:
  using Responder = std::function<StubReply(const std::string& system, const std::string& user)>;

  explicit StubServer(Transcript transcript);
  explicit StubServer(Responder responder);
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  int port() const;
  std::string base_url() const;  // http://127.0.0.1:<port>/v1
  int requests() const;
  std::vector<std::string> received_bodies() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace oddr::llm
