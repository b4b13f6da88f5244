#include "oddr/llm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace oddr::llm {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (base_url.empty()) throw std::invalid_argument("llm.base_url is empty");
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw std::invalid_argument("llm.base_url must start with http:// or https://");
  }
  if (model.empty()) throw std::invalid_argument("llm.model is empty");
  if (api_key_env.empty()) throw std::invalid_argument("llm.api_key_env is empty");
  if (!(timeout_s > 0.0)) throw std::invalid_argument("llm.timeout_s must be positive");
  if (max_retries < 0) throw std::invalid_argument("llm.max_retries must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("llm.batch_size must be >= 1");
  if (max_in_flight < 1) throw std::invalid_argument("llm.max_in_flight must be >= 1");
  if (backoff_initial_s < 0.0) throw std::invalid_argument("llm.backoff_initial_s must be >= 0");
}

std::string_view to_string(Schema s) {
  switch (s) {
    case Schema::kScorer: return "scorer";
    case Schema::kReviewer: return "reviewer";
    case Schema::kDispatcher: return "dispatcher";
    case Schema::kRepositioner: return "repositioner";
  }
  return "unknown";
}

// -- templates ------------------------------------------------------------

const PromptTemplate& scorer_template() {
  static const PromptTemplate t{
      "scorer",
      "You value ride-hailing orders for a dispatch platform. Answer with JSON only.",
      R"(Role: order value scorer
Tick {{tick}}, minute of day {{minute_of_day}}.
Objectives:
- Orders with a higher immediate reward and a shorter wait so far deserve a higher value (reward weight {{reward_weight}}, waiting weight {{wait_weight}}).
- Orders heading to regions with a greater future value deserve a higher value (weight {{future_weight}}).
A region's future value counts trips that ended there minus trips that started there over the last {{window_min}} minutes; it can be negative. Drivers dropped in high-value regions tend to find the next passenger quickly.

Orders:
{{#orders}}- order {{id}}: origin region {{origin}}, destination region {{dest}}, reward {{reward}} USD, trip {{trip_km}} km / {{trip_min}} min, waited {{waited}} of {{max_wait}} min, destination future value {{f_value}}{{note}}
{{/orders}}
Reply with one JSON object mapping every order id above (as a string) to an overall value between 0 and 100, for example {"17": 72.5}. Include each listed order exactly once and no other keys.
)",
      Schema::kScorer};
  return t;
}

const PromptTemplate& reviewer_template() {
  static const PromptTemplate t{
      "reviewer",
      "You audit order valuations for a ride-hailing dispatch platform. Answer with JSON only.",
      R"(Role: order value reviewer
Check that the values below are consistent with each other. An order that is at least as good as another on reward, destination future value and waiting time should not be valued clearly lower. Look at the ranking and spread across the whole set.

Orders:
{{#orders}}- order {{id}}: reward {{reward}} USD, waited {{waited}} min, destination future value {{f_value}}, trip {{trip_km}} km, value {{value}}
{{/orders}}
Reply with one JSON object mapping every order id above (as a string) to {"flag": 0 or 1, "feedback": "..."}. Use flag 1 when the value must be reassessed and say in the feedback which way it should move.
)",
      Schema::kReviewer};
  return t;
}

const PromptTemplate& dispatcher_template() {
  static const PromptTemplate t{
      "dispatcher",
      "You assign ride-hailing orders to drivers. Answer with JSON only.",
      R"(Role: order dispatcher
Order {{order_id}} has overall value {{value}}: origin region {{origin}}, destination region {{dest}}, reward {{reward}} USD.
Eligible drivers, all idle and within {{max_pickup_m}} m of the pickup:
{{#drivers}}- driver {{id}}: pickup distance {{pickup_m}} m, income so far {{cum_reward}} USD, finished orders {{finished}}, idle {{idle}} min
{{/drivers}}
Pick exactly one driver. Weigh a short pickup (weight {{proximity_w}}) against giving work to drivers who have earned less so far (weight {{fairness_w}}).
{{correction}}
Reply with one JSON object of the form {"driver_id": <id>}.
)",
      Schema::kDispatcher};
  return t;
}

const PromptTemplate& repositioner_template() {
  static const PromptTemplate t{
      "repositioner",
      "You move idle ride-hailing drivers toward demand. Answer with JSON only.",
      R"(Role: idle driver repositioning
Driver {{driver_id}} has been idle for {{idle}} min in region {{region}}.
Candidate regions within two hex steps:
{{#candidates}}- region {{id}}: requests in the last {{history}} min D={{demand}}, matched M={{matched}}, drivers arriving within {{horizon}} min V={{arriving}}
{{/candidates}}
Prefer regions where demand is high, few requests were served and little supply is already on its way.
{{correction}}
Reply with one JSON object of the form {"region_id": <id>}.
)",
      Schema::kRepositioner};
  return t;
}

namespace {

const std::string* lookup(const std::vector<const Row*>& scopes, const std::string& key) {
  for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
    if (auto f = (*it)->find(key); f != (*it)->end()) return &f->second;
  }
  return nullptr;
}

void render_into(std::string_view text, const TemplateContext& ctx, std::vector<const Row*>& scopes,
                 std::string& out) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      return;
    }
    out.append(text.substr(pos, open - pos));
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("", "unterminated '{{' in template");
    const std::string tag(text.substr(open + 2, close - open - 2));
    pos = close + 2;
    if (tag.empty()) throw TemplateError("", "empty tag in template");

    if (tag[0] == '#') {
      const std::string name = tag.substr(1);
      const std::string end_tag = "{{/" + name + "}}";
      const auto end = text.find(end_tag, pos);
      if (end == std::string_view::npos) throw TemplateError(name, "unclosed section: " + name);
      const auto inner = text.substr(pos, end - pos);
      pos = end + end_tag.size();
      auto list = ctx.lists.find(name);
      if (list == ctx.lists.end()) throw TemplateError(name, "missing template field: " + name);
      for (const Row& row : list->second) {
        scopes.push_back(&row);
        render_into(inner, ctx, scopes, out);
        scopes.pop_back();
      }
    } else if (tag[0] == '/') {
      throw TemplateError(tag.substr(1), "unexpected section end: " + tag.substr(1));
    } else {
      const std::string* v = lookup(scopes, tag);
      if (v == nullptr) throw TemplateError(tag, "missing template field: " + tag);
      out.append(*v);
    }
  }
}

}  // namespace

std::string render(std::string_view text, const TemplateContext& ctx) {
  std::vector<const Row*> scopes{&ctx.values};
  std::string out;
  render_into(text, ctx, scopes, out);
  return out;
}

std::string render(const PromptTemplate& t, const TemplateContext& ctx) { return render(t.body, ctx); }

std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
    if (!s.empty() && s[0] == '-') s.erase(0, 1);
  }
  return s;
}

// -- transport ------------------------------------------------------------

void EventSink::add(std::string note) {
  std::lock_guard lock(mu_);
  notes_.push_back(std::move(note));
}

std::vector<std::string> EventSink::drain() {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  out.swap(notes_);
  return out;
}

HttpChatClient::HttpChatClient(EndpointConfig cfg, std::string api_key, EventSink* sink)
    : cfg_(std::move(cfg)), api_key_(std::move(api_key)), sink_(sink) {
  cfg_.validate();
  const auto scheme_end = cfg_.base_url.find("://");
  const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
}

int HttpChatClient::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::string HttpChatClient::complete(std::string_view system, std::string_view user) {
  const json body = {
      {"model", cfg_.model},
      {"temperature", cfg_.temperature},
      {"messages", json::array({{{"role", "system"}, {"content", std::string(system)}},
                                {{"role", "user"}, {"content", std::string(user)}}})},
  };
  const std::string payload = body.dump();

  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(cfg_.timeout_s));
  std::string last_error;
  double backoff = cfg_.backoff_initial_s;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      if (sink_ != nullptr) sink_->add("llm: retry " + std::to_string(attempt) + " after " + last_error);
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    // A client per request keeps concurrent batches independent.
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    {
      std::lock_guard lock(mu_);
      ++requests_;
    }
    auto res = cli.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400) {
      throw AuthError(res->status, "endpoint rejected the request with status " + std::to_string(res->status) +
                                       ": " + res->body.substr(0, 200));
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw ParseError("response body is not JSON");
    try {
      const json& content = parsed.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw ParseError("message content is not a string");
      return content.get<std::string>();
    } catch (const json::exception&) {
      throw ParseError("response has no choices[0].message.content");
    }
  }
  throw TransportError("giving up after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
}

std::string api_key_from_env(const EndpointConfig& cfg) {
  const char* v = std::getenv(cfg.api_key_env.c_str());
  if (v == nullptr || *v == '\0') {
    throw AuthError(0, "environment variable " + cfg.api_key_env + " is not set");
  }
  return v;
}

std::string FunctionTransport::complete(std::string_view system, std::string_view user) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  return fn_(system, user);
}

int FunctionTransport::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// -- parsing --------------------------------------------------------------

std::optional<std::string> extract_json_object(std::string_view raw) {
  for (std::size_t start = raw.find('{'); start != std::string_view::npos; start = raw.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          std::string candidate(raw.substr(start, i - start + 1));
          if (json::accept(candidate)) return candidate;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

json object_or_throw(std::string_view raw) {
  const auto text = extract_json_object(raw);
  if (!text) throw ParseError("no JSON object in reply");
  json j = json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("no JSON object in reply");
  return j;
}

std::optional<std::int64_t> parse_id(const std::string& key) {
  if (key.empty() || key.size() > 18) return std::nullopt;
  std::size_t i = key[0] == '-' ? 1 : 0;
  if (i == key.size()) return std::nullopt;
  for (std::size_t k = i; k < key.size(); ++k) {
    if (key[k] < '0' || key[k] > '9') return std::nullopt;
  }
  return std::stoll(key);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

// Checks that keys are exactly `expected` and collects per-key values.
template <typename T, typename Convert>
std::map<OrderId, T> keyed(const json& j, std::span<const OrderId> expected, Convert convert) {
  std::set<OrderId> want(expected.begin(), expected.end());
  std::map<OrderId, T> out;
  std::vector<std::string> unexpected, invalid, missing;
  for (const auto& [key, value] : j.items()) {
    const auto id = parse_id(key);
    if (!id || !want.contains(*id)) {
      unexpected.push_back(key);
      continue;
    }
    if (auto v = convert(value)) {
      out[*id] = std::move(*v);
    } else {
      invalid.push_back(key);
    }
  }
  for (OrderId id : want) {
    if (!out.contains(id) &&
        std::find(invalid.begin(), invalid.end(), std::to_string(id)) == invalid.end()) {
      missing.push_back(std::to_string(id));
    }
  }
  std::vector<std::string> parts;
  if (!missing.empty()) parts.push_back("missing: " + join(missing));
  if (!invalid.empty()) parts.push_back("invalid: " + join(invalid));
  if (!unexpected.empty()) parts.push_back("unexpected: " + join(unexpected));
  if (!parts.empty()) {
    std::string msg;
    for (const auto& p : parts) msg += (msg.empty() ? "" : "; ") + p;
    throw ParseError(msg);
  }
  return out;
}

std::optional<std::int64_t> integer_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_number_float()) {
    const double d = it->get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
  }
  if (it->is_string()) return parse_id(it->get<std::string>());
  return std::nullopt;
}

}  // namespace

ValueMap parse_scores(std::string_view raw, std::span<const OrderId> expected) {
  const json j = object_or_throw(raw);
  return keyed<double>(j, expected, [](const json& v) -> std::optional<double> {
    if (!v.is_number()) return std::nullopt;
    const double d = v.get<double>();
    if (!std::isfinite(d) || d < 0.0 || d > 100.0) return std::nullopt;
    return d;
  });
}

ReviewMap parse_review(std::string_view raw, std::span<const OrderId> expected) {
  const json j = object_or_throw(raw);
  return keyed<ReviewFlag>(j, expected, [](const json& v) -> std::optional<ReviewFlag> {
    if (!v.is_object()) return std::nullopt;
    auto f = v.find("flag");
    if (f == v.end()) return std::nullopt;
    ReviewFlag out;
    if (f->is_boolean()) {
      out.flagged = f->get<bool>();
    } else if (f->is_number_integer() && (f->get<std::int64_t>() == 0 || f->get<std::int64_t>() == 1)) {
      out.flagged = f->get<std::int64_t>() == 1;
    } else {
      return std::nullopt;
    }
    if (auto fb = v.find("feedback"); fb != v.end()) {
      if (!fb->is_string()) return std::nullopt;
      out.feedback = fb->get<std::string>();
    }
    return out;
  });
}

DriverId parse_driver_choice(std::string_view raw) {
  const json j = object_or_throw(raw);
  if (auto id = integer_field(j, "driver_id")) return *id;
  throw ParseError("missing: driver_id");
}

RegionId parse_region_choice(std::string_view raw) {
  const json j = object_or_throw(raw);
  auto id = integer_field(j, "region_id");
  if (!id) throw ParseError("missing: region_id");
  if (*id < 0 || *id > std::numeric_limits<std::int32_t>::max()) throw ParseError("invalid: region_id");
  return RegionId{static_cast<std::int32_t>(*id)};
}

Payload parse_response(Schema schema, std::string_view raw, std::span<const OrderId> expected) {
  switch (schema) {
    case Schema::kScorer: return parse_scores(raw, expected);
    case Schema::kReviewer: return parse_review(raw, expected);
    case Schema::kDispatcher: return parse_driver_choice(raw);
    case Schema::kRepositioner: return parse_region_choice(raw);
  }
  throw ParseError("unknown schema");
}

// -- policies -------------------------------------------------------------

namespace {

Row order_row(const OrderSnapshot& o) {
  return {
      {"id", std::to_string(o.id)},
      {"origin", std::to_string(o.origin.index)},
      {"dest", std::to_string(o.dest.index)},
      {"reward", fixed(o.reward, 2)},
      {"trip_km", fixed(o.trip_distance_m / 1000.0, 2)},
      {"trip_min", std::to_string(o.trip_time_min)},
      {"waited", std::to_string(o.waited)},
      {"max_wait", std::to_string(o.max_wait_min)},
      {"f_value", std::to_string(o.future_value)},
  };
}

std::vector<OrderId> ids_of(std::span<const OrderSnapshot> orders) {
  std::vector<OrderId> out;
  out.reserve(orders.size());
  for (const auto& o : orders) out.push_back(o.id);
  return out;
}

std::string retry_suffix(const std::string& error) {
  return "\nYour previous reply could not be used (" + error +
         "). Reply again with a single JSON object that follows the format exactly.\n";
}

}  // namespace

LlmValuation::LlmValuation(ChatTransport& transport, EndpointConfig cfg, EventSink* sink)
    : transport_(transport), cfg_(std::move(cfg)), sink_(sink) {}

ValueMap LlmValuation::score_chunk(std::span<const OrderSnapshot> chunk, const ScorerConstraints& c,
                                   const RescoreMap* prior) {
  // Pending orders age once per tick, so request tick + waited is the current tick.
  const int tick = chunk.empty() ? 0 : chunk.front().request_tick + chunk.front().waited;
  TemplateContext ctx;
  ctx.values = {
      {"tick", std::to_string(tick)},
      {"minute_of_day", std::to_string(((tick % 1440) + 1440) % 1440)},
      {"reward_weight", fixed(c.reward_weight, 2)},
      {"future_weight", fixed(c.future_weight, 2)},
      {"wait_weight", fixed(c.wait_weight, 2)},
      {"window_min", std::to_string(c.window_min)},
  };
  auto& rows = ctx.lists["orders"];
  for (const auto& o : chunk) {
    Row r = order_row(o);
    std::string note;
    if (prior != nullptr) {
      if (auto it = prior->find(o.id); it != prior->end()) {
        note = "; previous value " + fixed(it->second.previous, 2) + ", reviewer feedback: " + it->second.feedback;
      }
    }
    r["note"] = note;
    rows.push_back(std::move(r));
  }
  const auto& t = scorer_template();
  const std::string prompt = render(t, ctx);
  const auto ids = ids_of(chunk);
  try {
    return parse_scores(transport_.complete(t.system, prompt), ids);
  } catch (const ParseError& e) {
    if (sink_ != nullptr) sink_->add(std::string("llm scorer: retry with correction after: ") + e.what());
    return parse_scores(transport_.complete(t.system, prompt + retry_suffix(e.what())), ids);
  }
}

namespace {

std::vector<OrderSnapshot> by_id(std::span<const OrderSnapshot> orders) {
  std::vector<OrderSnapshot> out(orders.begin(), orders.end());
  std::stable_sort(out.begin(), out.end(), [](const OrderSnapshot& a, const OrderSnapshot& b) { return a.id < b.id; });
  return out;
}

}  // namespace

ValueMap LlmValuation::score(std::span<const OrderSnapshot> unsorted, std::span<const OrderSnapshot>,
                             const ScorerConstraints& c, const RescoreMap* prior) {
  const std::vector<OrderSnapshot> sorted = by_id(unsorted);
  const std::span<const OrderSnapshot> batch(sorted);
  const std::size_t size = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<std::span<const OrderSnapshot>> chunks;
  for (std::size_t i = 0; i < batch.size(); i += size) {
    chunks.push_back(batch.subspan(i, std::min(size, batch.size() - i)));
  }
  std::vector<ValueMap> results(chunks.size());
  const std::size_t wave = static_cast<std::size_t>(cfg_.max_in_flight);
  for (std::size_t begin = 0; begin < chunks.size(); begin += wave) {
    const std::size_t end = std::min(chunks.size(), begin + wave);
    if (end - begin == 1) {
      results[begin] = score_chunk(chunks[begin], c, prior);
      continue;
    }
    std::vector<std::future<ValueMap>> futures;
    for (std::size_t k = begin; k < end; ++k) {
      futures.push_back(std::async(std::launch::async, [this, &chunks, &c, prior, k] {
        return score_chunk(chunks[k], c, prior);
      }));
    }
    // Collect every future before rethrowing so no task outlives this frame.
    std::exception_ptr first_error;
    for (std::size_t k = begin; k < end; ++k) {
      try {
        results[k] = futures[k - begin].get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }
  ValueMap merged;
  for (const auto& r : results) merged.insert(r.begin(), r.end());
  return merged;
}

ReviewMap LlmValuation::review(std::span<const OrderSnapshot> unsorted, const ValueMap& values) {
  const std::vector<OrderSnapshot> all = by_id(unsorted);
  TemplateContext ctx;
  auto& rows = ctx.lists["orders"];
  for (const auto& o : all) {
    Row r = order_row(o);
    auto it = values.find(o.id);
    r["value"] = it == values.end() ? "unknown" : fixed(it->second, 2);
    rows.push_back(std::move(r));
  }
  const auto& t = reviewer_template();
  const std::string prompt = render(t, ctx);
  const auto ids = ids_of(all);
  try {
    return parse_review(transport_.complete(t.system, prompt), ids);
  } catch (const ParseError& e) {
    if (sink_ != nullptr) sink_->add(std::string("llm reviewer: retry with correction after: ") + e.what());
    return parse_review(transport_.complete(t.system, prompt + retry_suffix(e.what())), ids);
  }
}

DriverId LlmDispatcher::choose(const DispatchQuery& q, std::string_view correction) {
  TemplateContext ctx;
  ctx.values = {
      {"order_id", std::to_string(q.order.id)},
      {"value", fixed(q.value, 2)},
      {"origin", std::to_string(q.order.origin.index)},
      {"dest", std::to_string(q.order.dest.index)},
      {"reward", fixed(q.order.reward, 2)},
      {"max_pickup_m", fixed(q.max_pickup_m, 0)},
      {"proximity_w", fixed(q.weights.proximity_w, 2)},
      {"fairness_w", fixed(q.weights.fairness_w, 2)},
      {"correction", correction.empty() ? "" : "Note: " + std::string(correction) + "."},
  };
  auto& rows = ctx.lists["drivers"];
  for (const auto& d : q.eligible) {
    rows.push_back({{"id", std::to_string(d.id)},
                    {"pickup_m", fixed(d.pickup_m, 0)},
                    {"cum_reward", fixed(d.cum_reward, 2)},
                    {"finished", std::to_string(d.finished_orders)},
                    {"idle", std::to_string(d.idle_time)}});
  }
  const auto& t = dispatcher_template();
  return parse_driver_choice(transport_.complete(t.system, render(t, ctx)));
}

RegionId LlmRepositioner::choose(const Driver& driver, std::span<const RegionFeatures> candidates,
                                 std::string_view correction) {
  TemplateContext ctx;
  ctx.values = {
      {"driver_id", std::to_string(driver.id)},
      {"idle", std::to_string(driver.idle_time)},
      {"region", std::to_string(driver.loc.region.index)},
      {"history", std::to_string(windows_.history_min)},
      {"horizon", std::to_string(windows_.arrival_horizon_min)},
      {"correction", correction.empty() ? "" : "Note: " + std::string(correction) + "."},
  };
  auto& rows = ctx.lists["candidates"];
  for (const auto& c : candidates) {
    rows.push_back({{"id", std::to_string(c.region.index)},
                    {"demand", std::to_string(c.demand)},
                    {"matched", std::to_string(c.matched)},
                    {"arriving", std::to_string(c.arriving)}});
  }
  const auto& t = repositioner_template();
  return parse_region_choice(transport_.complete(t.system, render(t, ctx)));
}

// -- stub server ----------------------------------------------------------

namespace {

StubReply reply_from_json(const json& j) {
  StubReply r;
  r.status = j.value("status", 200);
  r.content = j.value("content", std::string());
  if (j.contains("raw")) r.raw = j.at("raw").get<std::string>();
  r.delay_ms = j.value("delay_ms", 0);
  return r;
}

}  // namespace

Transcript Transcript::from_json(std::string_view text) {
  const json j = json::parse(text);
  Transcript t;
  for (const auto& rule : j.value("rules", json::array())) {
    StubRule r;
    r.contains = rule.value("contains", std::string());
    for (const auto& rep : rule.at("replies")) r.replies.push_back(reply_from_json(rep));
    if (r.replies.empty()) throw std::invalid_argument("transcript rule without replies");
    t.rules.push_back(std::move(r));
  }
  if (j.contains("default")) t.fallback = reply_from_json(j.at("default"));
  return t;
}

struct StubServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  Responder responder;
  mutable std::mutex mu;
  int requests = 0;
  std::vector<std::string> bodies;
};

namespace {

StubServer::Responder transcript_responder(Transcript transcript) {
  auto state = std::make_shared<std::pair<Transcript, std::vector<std::size_t>>>(
      std::move(transcript), std::vector<std::size_t>());
  state->second.assign(state->first.rules.size(), 0);
  auto mu = std::make_shared<std::mutex>();
  return [state, mu](const std::string&, const std::string& user) {
    std::lock_guard lock(*mu);
    auto& [t, cursor] = *state;
    for (std::size_t i = 0; i < t.rules.size(); ++i) {
      if (user.find(t.rules[i].contains) == std::string::npos) continue;
      const auto& replies = t.rules[i].replies;
      const std::size_t k = std::min(cursor[i], replies.size() - 1);
      ++cursor[i];
      return replies[k];
    }
    return t.fallback;
  };
}

}  // namespace

StubServer::StubServer(Transcript transcript) : StubServer(transcript_responder(std::move(transcript))) {}

StubServer::StubServer(Responder responder) : impl_(std::make_unique<Impl>()) {
  impl_->responder = std::move(responder);
  Impl* impl = impl_.get();
  impl->server.Post(R"(.*/chat/completions)", [impl](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(impl->mu);
      ++impl->requests;
      impl->bodies.push_back(req.body);
    }
    std::string system, user;
    json body = json::parse(req.body, nullptr, false);
    if (!body.is_discarded() && body.contains("messages") && body["messages"].is_array()) {
      for (const auto& m : body["messages"]) {
        if (!m.is_object() || !m.contains("content") || !m["content"].is_string()) continue;
        const std::string role = m.value("role", std::string());
        (role == "system" ? system : user) += m["content"].get<std::string>();
      }
    }
    const StubReply r = impl->responder(system, user);
    if (r.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(r.delay_ms));
    res.status = r.status;
    if (r.raw) {
      res.set_content(*r.raw, "application/json");
    } else if (r.status >= 200 && r.status < 300) {
      const json out = {{"choices", json::array({{{"index", 0},
                                                  {"message", {{"role", "assistant"}, {"content", r.content}}},
                                                  {"finish_reason", "stop"}}})}};
      res.set_content(out.dump(), "application/json");
    } else {
      res.set_content(json{{"error", {{"message", r.content}}}}.dump(), "application/json");
    }
  });
  impl->port = impl->server.bind_to_any_port("127.0.0.1");
  if (impl->port <= 0) throw std::runtime_error("stub server could not bind");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

StubServer::~StubServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int StubServer::port() const { return impl_->port; }

std::string StubServer::base_url() const { return "http://127.0.0.1:" + std::to_string(impl_->port) + "/v1"; }

int StubServer::requests() const {
  std::lock_guard lock(impl_->mu);
  return impl_->requests;
}

std::vector<std::string> StubServer::received_bodies() const {
  std::lock_guard lock(impl_->mu);
  return impl_->bodies;
}

}  // namespace oddr::llm
