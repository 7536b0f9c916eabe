#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "proofforge/error.hpp"
#include "proofforge/modelgw.hpp"

using namespace proofforge;
using namespace proofforge::modelgw;
using nlohmann::json;

namespace {

Transcript ask(const std::string& text) {
  Transcript t;
  t.user(text);
  return t;
}

}  // namespace

TEST_CASE("scripted passthrough and underrun") {
  testing::Scripted s;
  auto spec = testing::model("m");
  std::string reply = "```lean\ntheorem t : True := by sorry\n```";
  s.backend->enqueue("m", reply);
  auto t = ask("hello");
  auto before = t;
  CHECK(s.gateway.complete(spec, t) == reply);
  CHECK(t == before);
  try {
    s.gateway.complete(spec, t);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::fixture_underrun);
  }
}

TEST_CASE("transport failures retry with backoff") {
  testing::Scripted s;
  auto spec = testing::model("m");
  spec.max_retries = 2;
  s.backend->enqueue_failure("m", "connection reset");
  s.backend->enqueue_failure("m", "connection reset");
  s.backend->enqueue("m", "ok");
  CHECK(s.gateway.complete(spec, ask("x")) == "ok");
  auto log = s.gateway.call_log();
  REQUIRE(log.size() == 3);
  CHECK(log[0].attempt == 1);
  CHECK_FALSE(log[0].ok);
  CHECK(log[2].attempt == 3);
  CHECK(log[2].ok);
  REQUIRE(s.sleeps.size() == 2);
  CHECK(s.sleeps[0] == std::chrono::seconds(1));
  CHECK(s.sleeps[1] == std::chrono::seconds(2));
}

TEST_CASE("retries run out") {
  testing::Scripted s;
  auto spec = testing::model("m");
  spec.max_retries = 1;
  s.backend->enqueue_failure("m", "down");
  s.backend->enqueue_failure("m", "down");
  s.backend->enqueue("m", "never reached");
  try {
    s.gateway.complete(spec, ask("x"));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::transport);
  }
  CHECK(s.gateway.call_count("m") == 2);
  CHECK(s.backend->remaining("m") == 1);
}

TEST_CASE("backoff schedule doubles and caps") {
  CHECK(backoff_delay(1) == std::chrono::seconds(1));
  CHECK(backoff_delay(2) == std::chrono::seconds(2));
  CHECK(backoff_delay(3) == std::chrono::seconds(4));
  CHECK(backoff_delay(5) == std::chrono::seconds(16));
  CHECK(backoff_delay(6) == std::chrono::seconds(30));
  CHECK(backoff_delay(40) == std::chrono::seconds(30));
}

TEST_CASE("rate limiting spaces calls through the sleeper") {
  testing::Scripted s;
  auto spec = testing::model("m");
  spec.requests_per_minute = 60;
  for (int i = 0; i < 3; ++i) s.backend->enqueue("m", "r");
  for (int i = 0; i < 3; ++i) s.gateway.complete(spec, ask("x"));
  // the fake sleeper does not advance the clock, so later calls wait for
  // the slots already reserved: about 1s, then about 2s
  REQUIRE(s.sleeps.size() == 2);
  CHECK(s.sleeps[0] >= std::chrono::milliseconds(900));
  CHECK(s.sleeps[0] <= std::chrono::milliseconds(1000));
  CHECK(s.sleeps[1] >= std::chrono::milliseconds(1900));
  CHECK(s.sleeps[1] <= std::chrono::milliseconds(2000));
}

TEST_CASE("transcripts must be well formed") {
  testing::Scripted s;
  Transcript bad;
  bad.user("a");
  bad.user("b");
  CHECK_THROWS_AS(s.gateway.complete(testing::model("m"), bad), Error);
  Transcript ends_with_assistant;
  ends_with_assistant.user("a").assistant("b");
  CHECK_THROWS_AS(s.gateway.complete(testing::model("m"), ends_with_assistant), Error);
  Transcript ok;
  ok.system("s").user("a").assistant("b").user("c");
  CHECK(ok.well_formed());
  CHECK(transcript_from_json(transcript_to_json(ok)) == ok);
}

TEST_CASE("model spec validation") {
  json j = {{"name", "gpt"}, {"provider", "http_openai_style"}};
  CHECK_THROWS_AS(model_spec_from_json(j), Error);
  j["endpoint"] = "https://api.example.com/v1/chat/completions";
  auto spec = model_spec_from_json(j);
  CHECK(spec.provider == Provider::http_openai_style);
  CHECK(model_spec_from_json(model_spec_to_json(spec)).endpoint == spec.endpoint);
  CHECK_THROWS_AS(model_spec_from_json({{"name", "x"}, {"max_retries", -1}}), Error);
  CHECK_THROWS_AS(model_spec_from_json({{"name", "x"}, {"colour", "red"}}), Error);
}

TEST_CASE("scripted fixture files") {
  auto b = ScriptedBackend::from_json({{"a", {"one", {{"transport_error", "boom"}}, "two"}}});
  CHECK(b->remaining("a") == 3);
  Gateway gw;
  gw.set_backend(Provider::scripted, b);
  std::vector<std::chrono::milliseconds> sleeps;
  gw.set_sleeper([&](auto d) { sleeps.push_back(d); });
  auto spec = testing::model("a");
  CHECK(gw.complete(spec, ask("x")) == "one");
  CHECK(gw.complete(spec, ask("x")) == "two");
  CHECK(sleeps.size() == 1);
}

TEST_CASE("prompt rendering") {
  auto refine = render_prompt(PromptId::formalize_refine, {{"lean_error", "unknown identifier 'foo'"}});
  CHECK(refine.rfind("Your previous Lean formalization failed to compile", 0) == 0);
  CHECK(refine.find("unknown identifier 'foo'") != std::string::npos);

  auto fb = render_prompt(PromptId::atp_multi_feedback,
                          {{"custom_formalization", "theorem t : True := by sorry"},
                           {"validation_errors", "error: x"},
                           {"last_turn_reminder", ""}});
  CHECK(fb.find("had compilation errors") != std::string::npos);

  try {
    render_prompt(PromptId::formalize_initial, {});
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_placeholder);
  }
}

TEST_CASE("every template renders completely with all its placeholders") {
  for (auto id : {PromptId::kb_agent_system, PromptId::kb_agent_user, PromptId::formalize_initial,
                  PromptId::formalize_refine, PromptId::atp_single, PromptId::atp_multi_initial,
                  PromptId::atp_multi_feedback, PromptId::summary, PromptId::category_label}) {
    auto names = placeholders(template_body(id));
    CHECK_FALSE(names.empty());
    Vars vars;
    for (const auto& n : names) vars[n] = "<" + n + "-value>";
    auto out = render_prompt(id, vars);
    for (const auto& n : names) {
      CHECK(out.find("<" + n + "-value>") != std::string::npos);
      CHECK(out.find("{" + n + "}") == std::string::npos);
    }
  }
}

TEST_CASE("substituted values are not rescanned") {
  CHECK(render_template("a {x} b", {{"x", "{y}"}, {"y", "no"}}) == "a {y} b");
}

TEST_CASE("code extraction") {
  CHECK(extract_code_block("<answer>```lean\nX\n```</answer>") == "X");
  CHECK(extract_code_block("first\n```lean\nA\n```\nthen the fix\n```lean\nB\n```\n") == "B");
  try {
    extract_code_block("-- no code");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::extraction);
    CHECK(e.detail() == "-- no code");
  }
  for (std::string x : {"theorem a : 1 = 1 := rfl", "x\ny\n  z", "-- only comment"}) {
    CHECK(extract_code_block("<answer>\n```lean\n" + x + "\n```\n</answer>") == x);
  }
}

TEST_CASE("http dialect request shapes") {
  ModelSpec spec;
  spec.name = "display";
  spec.provider = Provider::http_anthropic_style;
  spec.endpoint = "http://localhost/v1/messages";
  spec.params = {{"model", "wire-name"}, {"temperature", 0}};
  Transcript t;
  t.system("sys").user("hi");
  auto body = HttpBackend::build_request(spec, t);
  CHECK(body["model"] == "wire-name");
  CHECK(body["system"] == "sys");
  CHECK(body["messages"].size() == 1);
  CHECK(body["max_tokens"] == 8192);
  CHECK(body["temperature"] == 0);

  spec.provider = Provider::http_openai_style;
  body = HttpBackend::build_request(spec, t);
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");

  CHECK(HttpBackend::parse_response(Provider::http_openai_style,
                                    {{"choices", {{{"message", {{"content", "abc"}}}}}}}) == "abc");
  CHECK(HttpBackend::parse_response(Provider::http_anthropic_style,
                                    {{"content", {{{"type", "text"}, {"text", "a"}}, {{"type", "text"}, {"text", "b"}}}}}) ==
        "ab");
  CHECK_THROWS_AS(HttpBackend::parse_response(Provider::http_openai_style, {{"oops", 1}}), Error);
}

TEST_CASE("http backend against a local server") {
  httplib::Server srv;
  int hits = 0;
  srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits == 1) {
      res.status = 503;
      return;
    }
    auto body = json::parse(req.body);
    std::string last = body["messages"].back()["content"];
    res.set_content(json{{"choices", {{{"message", {{"content", "echo: " + last}}}}}}}.dump(), "application/json");
  });
  srv.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  Gateway gw;
  gw.set_sleeper([](auto) {});
  ModelSpec spec;
  spec.name = "local";
  spec.provider = Provider::http_openai_style;
  spec.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  CHECK(gw.complete(spec, ask("ping")) == "echo: ping");
  CHECK(hits == 2);

  spec.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/bad";
  try {
    gw.complete(spec, ask("ping"));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::provider);
  }
  srv.stop();
  th.join();
}
