#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "proofforge/corpus.hpp"
#include "proofforge/error.hpp"

using namespace proofforge;
using namespace proofforge::corpus;

namespace {

std::vector<Problem> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in);
}

Problem make(std::string id, std::string statement, Kind kind = Kind::prove,
             std::optional<std::string> answer = std::nullopt, std::optional<Category> cat = std::nullopt) {
  Problem p;
  p.id = std::move(id);
  p.statement_nl = std::move(statement);
  p.kind = kind;
  p.answer = std::move(answer);
  p.category = cat;
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::invalid_argument;
}

}  // namespace

TEST_CASE("corpus line parses into one problem") {
  auto ps = parse(
      R"({"id":"inmo_2014_2","kind":"prove","statement_nl":"Let n be a natural number. Prove that ⌊n/1⌋+⌊n/2⌋+...+⌊n/n⌋+⌊√n⌋ is even."})"
      "\n");
  REQUIRE(ps.size() == 1);
  CHECK(ps[0].id == "inmo_2014_2");
  CHECK(ps[0].kind == Kind::prove);
  CHECK_FALSE(ps[0].category.has_value());
  CHECK(ps[0].source.empty());
}

TEST_CASE("empty input gives an empty corpus") {
  CHECK(parse("").empty());
  CHECK(parse("\n  \n").empty());
}

TEST_CASE("duplicate ids cite both lines") {
  try {
    parse(R"({"id":"a","kind":"prove","statement_nl":"x"})"
          "\n"
          R"({"id":"a","kind":"prove","statement_nl":"y"})"
          "\n");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::duplicate_id);
    std::string msg = e.what();
    CHECK(msg.find("lines 1 and 2") != std::string::npos);
  }
}

TEST_CASE("malformed records are rejected with their line number") {
  auto bad = [](const std::string& line) {
    try {
      parse(R"({"id":"ok","kind":"prove","statement_nl":"x"})"
            "\n" +
            line + "\n");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).rfind("line 2:", 0) == 0);
      return e.kind();
    }
    FAIL("accepted: " << line);
    return ErrorKind::invalid_argument;
  };
  CHECK(bad(R"({"id":"b","kind":"solve","statement_nl":"x"})") == ErrorKind::malformed_record);
  CHECK(bad(R"({"id":"b","kind":"prove","answer":"3","statement_nl":"x"})") == ErrorKind::malformed_record);
  CHECK(bad(R"({"id":"b","kind":"guess","statement_nl":"x"})") == ErrorKind::malformed_record);
  CHECK(bad(R"({"id":"b","kind":"prove","statement_nl":"x","extra":1})") == ErrorKind::malformed_record);
  CHECK(bad(R"({"id":"b","kind":"prove","statement_nl":"x","category":"Topology"})") ==
        ErrorKind::malformed_record);
  CHECK(bad(R"({"id":"","kind":"prove","statement_nl":"x"})") == ErrorKind::malformed_record);
  CHECK(bad("{not json") == ErrorKind::malformed_record);
}

TEST_CASE("fixture corpus round-trips through serialize") {
  auto ps = ingest_corpus(testing::fixture("corpus.jsonl"));
  REQUIRE(ps.size() == 6);
  auto again = parse(serialize_corpus(ps));
  CHECK(again == ps);
  CHECK(kind_of([] { ingest_corpus("/nonexistent/corpus.jsonl"); }) == ErrorKind::io);
}

TEST_CASE("category names normalize") {
  CHECK(parse_category("Number Theory") == Category::NumberTheory);
  CHECK(parse_category("set theory & combinatorics") == Category::SetTheoryCombinatorics);
  CHECK(parse_category("SetTheoryCombinatorics") == Category::SetTheoryCombinatorics);
  CHECK(parse_category("  GEOMETRY. ") == Category::Geometry);
  CHECK_FALSE(parse_category("Topology").has_value());
  for (auto c : kAllCategories) {
    CHECK(parse_category(to_string(c)) == c);
    CHECK(parse_category(display_name(c)) == c);
  }
}

TEST_CASE("label_category maps scripted replies") {
  testing::Scripted s;
  auto spec = testing::model("labeler");
  s.backend->enqueue("labeler", "Number Theory");
  s.backend->enqueue("labeler", "set theory & combinatorics");
  s.backend->enqueue("labeler", "Topology");
  Problem p = make("p", "Show 7 is prime.");
  CHECK(label_category(p, s.gateway, spec) == Category::NumberTheory);
  CHECK(p.category == Category::NumberTheory);
  CHECK(label_category(p, s.gateway, spec) == Category::SetTheoryCombinatorics);
  try {
    label_category(p, s.gateway, spec);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unrecognized_label);
    CHECK(e.detail() == "Topology");
  }
  auto calls = s.backend->calls("labeler");
  REQUIRE(calls.size() == 3);
  CHECK(calls[0].messages.back().content.find("Show 7 is prime.") != std::string::npos);
}

TEST_CASE("label_all keeps human labels") {
  testing::Scripted s;
  s.backend->enqueue("labeler", "Algebra");
  std::vector<Problem> ps = {make("a", "x", Kind::prove, std::nullopt, Category::Geometry), make("b", "y")};
  label_all(ps, s.gateway, testing::model("labeler"));
  CHECK(ps[0].category == Category::Geometry);
  CHECK(ps[1].category == Category::Algebra);
  CHECK(s.backend->call_count("labeler") == 1);
}

TEST_CASE("solve problems are reframed as prove problems") {
  Problem p = make("inmo_2017_2", "Find all α such that the roots satisfy the condition.", Kind::solve,
                   std::string("α = −3 "));
  p.source = "INMO";
  auto q = frame_solve_as_prove(p);
  CHECK(q.kind == Kind::prove);
  CHECK(q.reframed_from_solve);
  CHECK(q.answer == p.answer);
  CHECK(q.statement_nl == p.statement_nl + "\n\nProve that the answer is: α = −3.");
  CHECK_NOTHROW(check_invariants(q));
  CHECK(frame_solve_as_prove(q) == q);

  Problem prove = make("x", "Prove it.");
  CHECK(frame_solve_as_prove(prove) == prove);
  // reframed problems never leak into corpus files
  CHECK_FALSE(problem_to_json(q).contains("reframed_from_solve"));
}

TEST_CASE("reframing touches exactly the solve problems") {
  std::vector<Problem> ps;
  for (int i = 0; i < 100; ++i) {
    Problem p = make("p" + std::to_string(i), "statement " + std::to_string(i));
    if (i % 25 < 9) {
      p.kind = Kind::solve;
      p.answer = std::to_string(i);
    }
    ps.push_back(p);
  }
  int reframed = 0, untouched = 0;
  for (const auto& p : ps) {
    auto q = frame_solve_as_prove(p);
    if (q.reframed_from_solve) {
      ++reframed;
    } else if (q == p) {
      ++untouched;
    }
  }
  CHECK(reframed == 36);
  CHECK(untouched == 64);
}
