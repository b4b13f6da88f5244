#include <gtest/gtest.h>

#include <cstdlib>
#include <regex>

#include <json.hpp>

#include "oddr/llm.hpp"
#include "oddr/rng.hpp"

namespace oddr::llm {
namespace {

Row order_row(const std::string& id) {
  return {{"id", id},          {"origin", "3"},     {"dest", "9"},       {"reward", "12.50"},
          {"trip_km", "2.10"}, {"trip_min", "9"},  {"waited", "1"},     {"max_wait", "2"},
          {"f_value", "4"},    {"note", ""}};
}

TemplateContext scorer_context(std::vector<Row> rows) {
  TemplateContext ctx;
  ctx.values = {{"tick", "600"},         {"minute_of_day", "600"}, {"reward_weight", "0.5"},
                {"future_weight", "0.3"}, {"wait_weight", "0.2"},    {"window_min", "60"}};
  ctx.lists["orders"] = std::move(rows);
  return ctx;
}

TEST(Render, PlainSubstitution) {
  TemplateContext ctx;
  ctx.values = {{"a", "1"}, {"b", "two"}};
  EXPECT_EQ(render("x={{a}}, y={{b}}", ctx), "x=1, y=two");
  EXPECT_EQ(render("no tags", ctx), "no tags");
}

TEST(Render, SectionsShadowOuterValues) {
  TemplateContext ctx;
  ctx.values = {{"id", "outer"}, {"sep", ";"}};
  ctx.lists["rows"] = {{{"id", "1"}}, {{"id", "2"}}};
  EXPECT_EQ(render("{{id}}:{{#rows}}[{{id}}{{sep}}]{{/rows}}", ctx), "outer:[1;][2;]");
}

TEST(Render, ScorerPromptHasOrderFields) {
  const std::string p = render(scorer_template(), scorer_context({order_row("417")}));
  EXPECT_NE(p.find("order 417"), std::string::npos);
  EXPECT_NE(p.find("reward 12.50"), std::string::npos);
  EXPECT_NE(p.find("waited 1 of 2 min"), std::string::npos);
  EXPECT_NE(p.find("future value 4"), std::string::npos);
  EXPECT_EQ(p.find("{{"), std::string::npos);
}

TEST(Render, MissingFieldNamesIt) {
  Row row = order_row("1");
  row.erase("f_value");
  try {
    render(scorer_template(), scorer_context({row}));
    FAIL() << "expected TemplateError";
  } catch (const TemplateError& e) {
    EXPECT_EQ(e.field(), "f_value");
    EXPECT_NE(std::string(e.what()).find("f_value"), std::string::npos);
  }
}

TEST(Render, MalformedTemplates) {
  EXPECT_THROW(render("{{a", {}), TemplateError);
  EXPECT_THROW(render("{{#l}}x", {}), TemplateError);
  EXPECT_THROW(render("{{/l}}", {}), TemplateError);
  EXPECT_THROW(render("{{#missing}}x{{/missing}}", {}), TemplateError);
}

TEST(Render, RepositionerListsEveryCandidate) {
  TemplateContext ctx;
  ctx.values = {{"driver_id", "7"}, {"idle", "6"},    {"region", "12"},
                {"history", "15"},  {"horizon", "15"}, {"correction", ""}};
  ctx.lists["candidates"] = {{{"id", "12"}, {"demand", "10"}, {"matched", "4"}, {"arriving", "2"}},
                             {{"id", "13"}, {"demand", "6"}, {"matched", "1"}, {"arriving", "0"}},
                             {{"id", "30"}, {"demand", "8"}, {"matched", "8"}, {"arriving", "3"}}};
  const std::string p = render(repositioner_template(), ctx);
  EXPECT_NE(p.find("D=10, matched M=4, drivers arriving within 15 min V=2"), std::string::npos);
  EXPECT_NE(p.find("D=6, matched M=1, drivers arriving within 15 min V=0"), std::string::npos);
  EXPECT_NE(p.find("D=8, matched M=8, drivers arriving within 15 min V=3"), std::string::npos);
}

TEST(Fixed, Formatting) {
  EXPECT_EQ(fixed(3.14159, 2), "3.14");
  EXPECT_EQ(fixed(2.0, 0), "2");
}

const std::vector<OrderId> kIds{12, 13};

TEST(ParseScores, Valid) {
  const auto v = parse_scores(R"({"12": 85.5, "13": 40})", kIds);
  EXPECT_EQ(v, (ValueMap{{12, 85.5}, {13, 40.0}}));
}

TEST(ParseScores, ProseAroundJson) {
  const auto v = parse_scores("Sure! Here are the values:\n```json\n{\"12\": 85.5, \"13\": 40}\n```\nHope this helps {", kIds);
  EXPECT_EQ(v.at(13), 40.0);
}

void expect_parse_error(const std::string& raw, const std::string& fragment) {
  try {
    parse_scores(raw, kIds);
    FAIL() << "accepted " << raw;
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(ParseScores, Errors) {
  expect_parse_error(R"({"12": 85.5})", "missing: 13");
  expect_parse_error(R"({"12": 85.5, "13": 140})", "invalid: 13");
  expect_parse_error(R"({"12": 85.5, "13": "high"})", "invalid: 13");
  expect_parse_error(R"({"12": 1, "13": 2, "99": 3})", "unexpected: 99");
  expect_parse_error("no json here", "no JSON object");
  expect_parse_error("[1, 2]", "no JSON object");
}

TEST(ParseReview, FlagsAndFeedback) {
  const auto r = parse_review(R"({"12": {"flag": 1, "feedback": "too low"}, "13": {"flag": false}})", kIds);
  EXPECT_TRUE(r.at(12).flagged);
  EXPECT_EQ(r.at(12).feedback, "too low");
  EXPECT_FALSE(r.at(13).flagged);
  EXPECT_THROW(parse_review(R"({"12": {"flag": 2}, "13": {"flag": 0}})", kIds), ParseError);
  EXPECT_THROW(parse_review(R"({"12": 1, "13": {"flag": 0}})", kIds), ParseError);
}

TEST(ParseChoices, DriverAndRegion) {
  EXPECT_EQ(parse_driver_choice(R"(I pick {"driver_id": 42})"), 42);
  EXPECT_EQ(parse_driver_choice(R"({"driver_id": "42"})"), 42);
  EXPECT_THROW(parse_driver_choice(R"({"driver": 42})"), ParseError);
  EXPECT_EQ(parse_region_choice(R"({"region_id": 17.0})"), RegionId{17});
  EXPECT_THROW(parse_region_choice(R"({"region_id": -3})"), ParseError);
  EXPECT_THROW(parse_region_choice(R"({"region_id": 2.5})"), ParseError);
}

TEST(ParseResponse, DispatchesBySchema) {
  EXPECT_TRUE(std::holds_alternative<ValueMap>(parse_response(Schema::kScorer, R"({"12": 1, "13": 2})", kIds)));
  EXPECT_TRUE(std::holds_alternative<DriverId>(parse_response(Schema::kDispatcher, R"({"driver_id": 1})")));
  EXPECT_TRUE(std::holds_alternative<RegionId>(parse_response(Schema::kRepositioner, R"({"region_id": 1})")));
}

TEST(ExtractJson, BalancedAndStringAware) {
  EXPECT_EQ(extract_json_object(R"(a {"x": "}{"} b)"), R"({"x": "}{"})");
  EXPECT_EQ(extract_json_object(R"({bad} then {"ok": {"n": 1}})"), R"({"ok": {"n": 1}})");
  EXPECT_FALSE(extract_json_object("{{{").has_value());
}

TEST(ParseFuzz, OnlyParseErrorsEscape) {
  auto g = rng::make_engine(2024);
  const std::string alphabet = "{}[]\":,0123456789.-e abcflag_idnrtu\\\n";
  const std::vector<OrderId> ids{1, 2, 3};
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const auto n = rng::uniform_index(g, 60);
    for (std::uint64_t k = 0; k < n; ++k) s += alphabet[rng::uniform_index(g, alphabet.size())];
    if (i % 3 == 0) s = "{\"1\": " + s;
    for (Schema schema : {Schema::kScorer, Schema::kReviewer, Schema::kDispatcher, Schema::kRepositioner}) {
      try {
        parse_response(schema, s, ids);
      } catch (const ParseError&) {
      } catch (const std::exception& e) {
        ADD_FAILURE() << "unexpected " << e.what() << " on " << s;
      }
    }
  }
}

EndpointConfig fast(const std::string& base_url) {
  EndpointConfig c;
  c.base_url = base_url;
  c.backoff_initial_s = 0.01;
  c.timeout_s = 5.0;
  return c;
}

TEST(HttpChatClient, StubEchoesContent) {
  Transcript t;
  t.fallback = {200, "fixture text", std::nullopt, 0};
  StubServer stub(t);
  HttpChatClient client(fast(stub.base_url()), "key");
  EXPECT_EQ(client.complete("sys", "hello"), "fixture text");
  EXPECT_EQ(client.requests(), 1);
  const auto bodies = stub.received_bodies();
  ASSERT_EQ(bodies.size(), 1u);
  const auto j = nlohmann::json::parse(bodies[0]);
  EXPECT_EQ(j.at("messages").at(1).at("content"), "hello");
  EXPECT_EQ(j.at("temperature"), 0.0);
}

TEST(HttpChatClient, RetriesServerErrors) {
  Transcript t;
  t.rules.push_back({"", {{500, ""}, {500, ""}, {200, "third time"}}});
  StubServer stub(t);
  EventSink sink;
  HttpChatClient client(fast(stub.base_url()), "key", &sink);
  EXPECT_EQ(client.complete("s", "u"), "third time");
  EXPECT_EQ(client.requests(), 3);
  EXPECT_EQ(stub.requests(), 3);
  EXPECT_EQ(sink.drain().size(), 2u);
}

TEST(HttpChatClient, GivesUpAfterRetries) {
  Transcript t;
  t.fallback = {503, "", std::nullopt, 0};
  StubServer stub(t);
  HttpChatClient client(fast(stub.base_url()), "key");
  EXPECT_THROW(client.complete("s", "u"), TransportError);
  EXPECT_EQ(client.requests(), 3);
}

TEST(HttpChatClient, UnauthorizedIsNotRetried) {
  Transcript t;
  t.fallback = {401, "", std::nullopt, 0};
  StubServer stub(t);
  HttpChatClient client(fast(stub.base_url()), "key");
  try {
    client.complete("s", "u");
    FAIL() << "expected AuthError";
  } catch (const AuthError& e) {
    EXPECT_EQ(e.status(), 401);
  }
  EXPECT_EQ(client.requests(), 1);
  EXPECT_EQ(stub.requests(), 1);
}

TEST(HttpChatClient, MalformedBodyIsParseError) {
  Transcript t;
  t.fallback = {200, "", std::string("<html>oops</html>"), 0};
  StubServer stub(t);
  HttpChatClient client(fast(stub.base_url()), "key");
  EXPECT_THROW(client.complete("s", "u"), ParseError);
}

TEST(HttpChatClient, TimeoutIsRetriedThenTransportError) {
  Transcript t;
  t.fallback = {200, "late", std::nullopt, 600};
  StubServer stub(t);
  EndpointConfig c = fast(stub.base_url());
  c.timeout_s = 0.2;
  c.max_retries = 1;
  HttpChatClient client(c, "key");
  EXPECT_THROW(client.complete("s", "u"), TransportError);
  EXPECT_EQ(client.requests(), 2);
}

TEST(HttpChatClient, ConnectionRefused) {
  EndpointConfig c = fast("http://127.0.0.1:1/v1");
  c.max_retries = 0;
  HttpChatClient client(c, "key");
  EXPECT_THROW(client.complete("s", "u"), TransportError);
}

TEST(Transcript, FromJsonRoutesByContent) {
  StubServer stub(Transcript::from_json(R"({
    "rules": [{"contains": "alpha", "replies": [{"status": 200, "content": "A1"}, {"content": "A2"}]}],
    "default": {"content": "D"}
  })"));
  HttpChatClient client(fast(stub.base_url()), "key");
  EXPECT_EQ(client.complete("s", "xx alpha"), "A1");
  EXPECT_EQ(client.complete("s", "beta"), "D");
  EXPECT_EQ(client.complete("s", "alpha"), "A2");
  EXPECT_EQ(client.complete("s", "alpha"), "A2");
  EXPECT_ANY_THROW(Transcript::from_json("not json"));
}

TEST(ApiKey, MissingVariableIsAuthError) {
  EndpointConfig c;
  c.api_key_env = "ODDR_TEST_SURELY_UNSET_KEY";
  ::unsetenv(c.api_key_env.c_str());
  try {
    api_key_from_env(c);
    FAIL();
  } catch (const AuthError& e) {
    EXPECT_EQ(e.status(), 0);
  }
  ::setenv(c.api_key_env.c_str(), "secret", 1);
  EXPECT_EQ(api_key_from_env(c), "secret");
  ::unsetenv(c.api_key_env.c_str());
}

TEST(EndpointConfig, Validation) {
  EXPECT_NO_THROW(EndpointConfig{}.validate());
  EndpointConfig c;
  c.batch_size = 0;
  EXPECT_ANY_THROW(c.validate());
}

// Ids listed in a scorer/reviewer prompt.
std::vector<OrderId> prompt_ids(std::string_view user) {
  static const std::regex re("- order (\\d+):");
  std::vector<OrderId> out;
  const std::string s(user);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back(std::stoll((*it)[1]));
  }
  return out;
}

std::vector<OrderSnapshot> snapshots(int n) {
  std::vector<OrderSnapshot> out;
  for (int i = n; i >= 1; --i) {
    OrderSnapshot s;
    s.id = i * 10;
    s.reward = 5.0 + i;
    s.waited = i % 3;
    s.future_value = i % 5 - 2;
    out.push_back(s);
  }
  return out;
}

TEST(LlmValuation, ScriptedScoresAppliedVerbatim) {
  FunctionTransport t([](std::string_view system, std::string_view user) -> std::string {
    nlohmann::json j = nlohmann::json::object();
    const bool scorer = system.find("value ride-hailing") != std::string_view::npos;
    for (OrderId id : prompt_ids(user)) {
      if (scorer) {
        j[std::to_string(id)] = static_cast<double>(id % 97) + 0.25;
      } else {
        j[std::to_string(id)] = {{"flag", 0}, {"feedback", ""}};
      }
    }
    return "Values follow.\n" + j.dump();
  });
  LlmValuation v(t, {});
  const auto snaps = snapshots(5);
  const auto r = refine_values(snaps, {}, v);
  EXPECT_FALSE(r.fell_back);
  EXPECT_EQ(r.iterations_used, 1);
  for (const auto& s : snaps) EXPECT_EQ(r.values.at(s.id), static_cast<double>(s.id % 97) + 0.25);
  EXPECT_EQ(t.calls(), 2);
}

TEST(LlmValuation, PromptRowsSortedById) {
  std::vector<OrderId> seen;
  FunctionTransport t([&](std::string_view, std::string_view user) -> std::string {
    seen = prompt_ids(user);
    nlohmann::json j;
    for (OrderId id : seen) j[std::to_string(id)] = 50;
    return j.dump();
  });
  LlmValuation v(t, {});
  const auto snaps = snapshots(4);
  v.score(snaps, snaps, {}, nullptr);
  EXPECT_EQ(seen, (std::vector<OrderId>{10, 20, 30, 40}));
}

TEST(LlmValuation, BatchesAreChunked) {
  FunctionTransport t([](std::string_view, std::string_view user) -> std::string {
    nlohmann::json j;
    for (OrderId id : prompt_ids(user)) j[std::to_string(id)] = 1;
    return j.dump();
  });
  EndpointConfig c;
  c.batch_size = 30;
  LlmValuation v(t, c);
  const auto snaps = snapshots(70);
  const auto values = v.score(snaps, snaps, {}, nullptr);
  EXPECT_EQ(values.size(), 70u);
  EXPECT_EQ(t.calls(), 3);
}

TEST(LlmValuation, ParseFailureRetriesOnceThenSucceeds) {
  int call = 0;
  FunctionTransport t([&](std::string_view, std::string_view user) -> std::string {
    if (call++ == 0) return "not json";
    EXPECT_NE(user.find("could not be used (no JSON object"), std::string_view::npos);
    nlohmann::json j;
    for (OrderId id : prompt_ids(user)) j[std::to_string(id)] = 33;
    return j.dump();
  });
  EventSink sink;
  LlmValuation v(t, {}, &sink);
  const auto snaps = snapshots(2);
  EXPECT_EQ(v.score(snaps, snaps, {}, nullptr).at(10), 33.0);
  EXPECT_EQ(sink.drain().size(), 1u);
}

TEST(LlmValuation, GarbageFallsBackToReference) {
  FunctionTransport t([](std::string_view, std::string_view) { return std::string("%%% garbage %%%"); });
  LlmValuation v(t, {});
  const auto snaps = snapshots(6);
  const auto r = refine_values(snaps, {}, v);
  EXPECT_TRUE(r.fell_back);
  EXPECT_EQ(r.values, score_orders_reference(snaps, {}));
  EXPECT_EQ(t.calls(), 2);  // first try plus the corrective retry
}

TEST(LlmDispatcher, ParsesChoiceAndPassesCorrection) {
  std::string last_user;
  FunctionTransport t([&](std::string_view, std::string_view user) {
    last_user = user;
    return std::string(R"({"driver_id": 5})");
  });
  LlmDispatcher d(t);
  OrderSnapshot o;
  o.id = 1;
  const DispatchWeights w;
  const std::vector<EligibleDriver> e{{5, 120.0, 10.0, 1, 3, RegionId{2}}};
  EXPECT_EQ(d.choose({o, 70.0, e, w, 950.0}, ""), 5);
  EXPECT_NE(last_user.find("driver 5: pickup distance 120"), std::string::npos);
  d.choose({o, 70.0, e, w, 950.0}, "driver 9 is not eligible");
  EXPECT_NE(last_user.find("driver 9 is not eligible"), std::string::npos);
}

TEST(LlmRepositioner, ParsesChoice) {
  FunctionTransport t([](std::string_view, std::string_view) { return std::string(R"({"region_id": 13})"); });
  LlmRepositioner r(t);
  Driver d;
  d.id = 3;
  d.loc.region = RegionId{12};
  std::vector<RegionFeatures> c(2);
  c[0].region = RegionId{12};
  c[1].region = RegionId{13};
  EXPECT_EQ(r.choose(d, c, ""), RegionId{13});
}

TEST(StubServer, ResponderFunction) {
  StubServer stub([](const std::string& system, const std::string& user) {
    return StubReply{200, system + "|" + user, std::nullopt, 0};
  });
  HttpChatClient client(fast(stub.base_url()), "key");
  EXPECT_EQ(client.complete("S", "U"), "S|U");
}

}  // namespace
}  // namespace oddr::llm
