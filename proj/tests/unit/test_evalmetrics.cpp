#include <chrono>
#include <fstream>
#include <functional>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "proofforge/error.hpp"
#include "proofforge/evalmetrics.hpp"
#include "ted_oracle.hpp"

using namespace proofforge;
using namespace proofforge::evalmetrics;

namespace {

std::string sx(std::string_view code) { return parse_optree(code).to_sexpr(); }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("s-expression round trip") {
  auto t = parse_sexpr("(= (+ a b) (f x (g y)))");
  CHECK(t.size() == 8);
  CHECK(parse_sexpr(t.to_sexpr()) == t);
  CHECK(parse_sexpr("leaf") == OpTree("leaf"));
  CHECK_THROWS_AS(parse_sexpr("(a (b)"), Error);
}

TEST_CASE("operator trees of theorem statements") {
  auto gold = util::read_file(testing::fixture("gold.jsonl"));
  std::string sqrt_thm;
  for (const auto& line : util::split_lines(gold)) {
    auto j = nlohmann::json::parse(line);
    if (j["problem_id"] == "nt-002") sqrt_thm = j["theorem_code"];
  }
  CHECK(sx(sqrt_thm) ==
        "(∀ ℕ (Even (+ (Finset.sum (Finset.range _0) (fun _ (⌊⌋ (/ (: _0 ℝ) (: (+ _1 1) ℝ))))) "
        "(⌊⌋ (Real.sqrt _0)))))");

  CHECK(sx("theorem t : ∑ i in Finset.range 10, (i + 1) = 55 := by sorry") ==
        "(= (∑ (∈ _0 (Finset.range 10)) (+ _0 1)) 55)");
  CHECK(sx("theorem t : 2 ^ 10 % 7 = 2 := by sorry") == "(= (% (^ 2 10) 7) 2)");
  CHECK(sx("theorem t (a b : ℝ) (h : a < b) : a ≤ b := by sorry") ==
        "(∀ ℝ (∀ ℝ (∀ (< _0 _1) (≤ _0 _1))))");
  CHECK(sx("theorem t (n : ℕ) : n ≡ 1 [ZMOD 4] := by sorry") == "(∀ ℕ (≡ _0 1 (ZMOD 4)))");
  CHECK(sx("theorem t : ∀ x : ℝ, ∃ y, y > x := by sorry") == "(∀ ℝ (∃ _ (> _1 _0)))");

  // bound names do not matter, free names do
  CHECK(parse_optree("theorem a (n : ℕ) (hn : 0 < n) : n ^ 2 ≥ n := by sorry") ==
        parse_optree("theorem b (m : ℕ) (h : 0 < m) : m ^ 2 ≥ m := by\n  nlinarith"));
  CHECK_FALSE(parse_optree("theorem a : f 1 = 2 := sorry") == parse_optree("theorem a : g 1 = 2 := sorry"));
  // comments and layout are ignored
  CHECK(parse_optree("theorem a :\n  -- note\n  1 + 1 = 2 := rfl") == parse_optree("theorem a : 1 + 1 = 2 := rfl"));
}

TEST_CASE("operator tree parse errors") {
  try {
    parse_optree("theorem t (n : ℕ :\n  n = n := rfl");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  CHECK(kind_of([] { parse_optree("def f := 1"); }) == ErrorKind::parse);
  CHECK(kind_of([] { parse_optree("theorem t (a : ℕ) := rfl"); }) == ErrorKind::parse);
  CHECK(kind_of([] { parse_optree("theorem t : (1 = 1))) := rfl"); }) == ErrorKind::parse);
}

TEST_CASE("tree edit distance on small cases") {
  auto t = [](const char* s) { return parse_sexpr(s); };
  CHECK(ted(t("a"), t("a")) == 0);
  CHECK(ted(t("a"), t("b")) == 1);
  CHECK(ted(t("(f x y)"), t("(f x z)")) == 1);
  CHECK(ted(t("(f x y)"), t("(f y)")) == 1);
  CHECK(ted(t("(f (g x))"), t("(f x)")) == 1);
  CHECK(ted(t("(f a b c)"), t("(f (g a b) c)")) == 1);
  CHECK(ted(t("(a (b c d) e)"), t("x")) == 5);

  auto g = gted_similarity(t("(f x y)"), t("(f x z)"));
  CHECK(g.ted_cost == 1);
  CHECK(g.size_a == 3);
  CHECK(g.similarity == doctest::Approx(1.0 - 1.0 / 6.0));
  CHECK(gted_similarity(t("(f x y)"), t("(f x z)"), Normalization::max).similarity == doctest::Approx(1.0 - 1.0 / 3.0));
  CHECK(gted_similarity(t("(a b)"), t("(a b)")).similarity == 1.0);
  CHECK(gted_similarity(t("a"), t("b")).similarity == doctest::Approx(0.5));
}

TEST_CASE("tree edit distance agrees with exhaustive search on all trees up to 4 nodes") {
  const std::vector<std::string> alphabet = {"a", "b"};
  auto trees = oracle::trees_up_to(4, alphabet);
  REQUIRE(trees.size() == 102);
  int mismatches = 0;
  for (const auto& a : trees) {
    auto dist = oracle::bfs(a, alphabet, 4);
    for (const auto& b : trees) {
      auto it = dist.find(oracle::key({b}));
      REQUIRE(it != dist.end());
      if (ted(a, b) != it->second) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("tree edit distance properties on random trees") {
  std::mt19937_64 rng(20240611);
  const std::vector<std::string> alphabet = {"+", "*", "x", "y", "1"};
  oracle::RecursiveTed reference;
  for (int i = 0; i < 1000; ++i) {
    auto a = oracle::random_tree(rng, 9, alphabet);
    auto b = oracle::random_tree(rng, 9, alphabet);
    auto c = oracle::random_tree(rng, 9, alphabet);
    int ab = ted(a, b);
    CAPTURE(a.to_sexpr());
    CAPTURE(b.to_sexpr());
    CHECK(ab == reference(a, b));
    CHECK(ab == ted(b, a));
    CHECK(ted(a, a) == 0);
    CHECK((ab == 0) == (a == b));
    CHECK(ab <= ted(a, c) + ted(c, b));
    int diff = static_cast<int>(a.size()) - static_cast<int>(b.size());
    CHECK(ab >= std::abs(diff));
    CHECK(ab <= static_cast<int>(std::max(a.size(), b.size())) + static_cast<int>(std::min(a.size(), b.size())));
    for (auto norm : {Normalization::sum, Normalization::max}) {
      auto s = gted_similarity(a, b, norm).similarity;
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
      CHECK((s == 1.0) == (a == b));
    }
  }
}

namespace {

const std::string kA = "import Mathlib\n\ntheorem a (n : ℕ) (h : 0 < n) : n ^ 2 ≥ n := by\n  sorry";
const std::string kB = "import Mathlib\nopen Real\n\ntheorem b (n : ℕ) : n ^ 2 ≥ n := by\n  sorry";

std::string prove_with(const std::string& goal_file, const std::string& proof) {
  auto pos = goal_file.rfind("sorry");
  return "<output>\n```lean\n" + goal_file.substr(0, pos) + proof + "\n```\n</output>";
}

}  // namespace

TEST_CASE("BEq goal files") {
  auto f = beq_goal_file(kA, kB, "beq_forward");
  CHECK(f ==
        "import Mathlib\nopen Real\n\n"
        "theorem beq_forward (h_src : ∀ (n : ℕ) (h : 0 < n), n ^ 2 ≥ n) :\n"
        "    ∀ (n : ℕ), n ^ 2 ≥ n := by\n  sorry\n");
  auto closed = beq_goal_file("theorem x : 1 + 1 = 2 := rfl", "theorem y : 2 = 1 + 1 := rfl", "g");
  CHECK(closed == "theorem g (h_src : 1 + 1 = 2) :\n    2 = 1 + 1 := by\n  sorry\n");

  auto with_def = "def f (n : ℕ) : ℕ := n + 1\n\ntheorem x : f 1 = 2 := rfl";
  auto same_def = "def f (n : ℕ) : ℕ := n + 1\n\ntheorem y : f 2 = 3 := rfl";
  auto other_def = "def f (n : ℕ) : ℕ := n + 2\n\ntheorem y : f 2 = 4 := rfl";
  auto merged = beq_goal_file(with_def, same_def, "g");
  CHECK(merged.find("def f (n : ℕ) : ℕ := n + 1\n\ntheorem g") == 0);
  try {
    beq_goal_file(with_def, other_def, "g");
    FAIL("expected a construction error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::construction);
    CHECK(std::string(e.what()) == "theorem y: conflicting definitions of f in the two files");
  }
  CHECK(kind_of([] { beq_goal_file("theorem beq_forward : True := trivial", kB, "g"); }) == ErrorKind::construction);
  CHECK(kind_of([] { beq_goal_file(kA, "theorem g : True := trivial", "g"); }) == ErrorKind::construction);
  CHECK(kind_of([] { beq_goal_file("theorem t (x : ℕ := 1", kB, "g"); }) == ErrorKind::parse);
}

TEST_CASE("BEq fast path needs no prover") {
  testing::Scripted s;
  leanrun::FakeValidator v;
  auto renamed = "import Mathlib\n\ntheorem other (m : ℕ) (hm : 0 < m) : m ^ 2 ≥ m := by\n  nlinarith";
  auto r = beq_check(kA, renamed, testing::model("prover"), s.gateway, v);
  CHECK(r.pass);
  CHECK(r.fast_path);
  CHECK_FALSE(r.forward);
  CHECK(s.gateway.call_log().empty());
  CHECK(kind_of([&] { beq_check(kA, kB, testing::model("prover"), s.gateway, v, 0); }) == ErrorKind::invalid_argument);
}

TEST_CASE("BEq reports a forward-only proof") {
  testing::Scripted s;
  leanrun::FakeValidator v({{"omega", "Candidate.lean:5:2: error: omega could not prove the goal", -1, false}});
  auto fwd = beq_goal_file(kA, kB, "beq_forward");
  auto bwd = beq_goal_file(kB, kA, "beq_backward");
  s.backend->enqueue("prover", prove_with(fwd, "intro n\n  exact Nat.le_self_pow (by norm_num) n"));
  for (int i = 0; i < 3; ++i) s.backend->enqueue("prover", prove_with(bwd, "omega"));

  auto r = beq_check(kA, kB, testing::model("prover"), s.gateway, v, 3);
  CHECK_FALSE(r.fast_path);
  CHECK(r.forward_proved);
  CHECK_FALSE(r.backward_proved);
  CHECK_FALSE(r.pass);
  REQUIRE(r.forward);
  REQUIRE(r.backward);
  CHECK(r.forward->task_id == "beq_forward");
  CHECK(r.forward->turns_used == 1);
  CHECK(r.backward->turns_used == 3);
  CHECK(s.backend->remaining("prover") == 0);
}

TEST_CASE("BEq passes when both directions are proved") {
  testing::Scripted s;
  leanrun::FakeValidator v;
  s.backend->enqueue("prover", prove_with(beq_goal_file(kA, kB, "beq_forward"), "intro n\n  nlinarith"));
  s.backend->enqueue("prover", prove_with(beq_goal_file(kB, kA, "beq_backward"), "intro n _\n  exact h_src n"));
  auto r = beq_check(kA, kB, testing::model("prover"), s.gateway, v);
  CHECK(r.pass);
}

TEST_CASE("comparisons against gold") {
  auto gold_code = load_gold(testing::fixture("gold.jsonl"));
  REQUIRE(gold_code.size() == 4);
  std::map<std::string, OpTree> gold;
  for (const auto& [id, code] : gold_code) gold[id] = parse_optree(code);

  std::vector<formalize::Candidate> cands(4);
  cands[0] = {"nt-001", "m", {}, formalize::FinalStatus::valid, "theorem q : 2 ^ 10 % 7 = 2 := by decide"};
  cands[1] = {"nt-001", "w", {}, formalize::FinalStatus::invalid, "theorem q : 2 ^ 10 % 7 = 2 := by decide"};
  cands[2] = {"nt-001", "u", {}, formalize::FinalStatus::valid, "theorem q : (2 ^ 10 % 7 = 2 := by decide"};
  cands[3] = {"geo-001", "m", {}, formalize::FinalStatus::valid, "theorem q : True := trivial"};
  std::map<std::pair<std::string, std::string>, bool> beq = {{{"m", "nt-001"}, true}, {{"w", "nt-001"}, true}};
  auto recs = compare_candidates(cands, gold, beq);
  CHECK(recs[0].similarity == 1.0);
  CHECK(recs[0].beq_pass == true);
  CHECK(recs[1].similarity == 0.0);
  CHECK(recs[1].beq_pass == false);
  CHECK(recs[2].similarity == 0.0);
  CHECK_FALSE(recs[2].beq_pass);
  CHECK_FALSE(recs[3].similarity);

  testing::TempDir tmp;
  save_comparisons(tmp / "c.jsonl", recs);
  CHECK(load_comparisons(tmp / "c.jsonl") == recs);

  std::ofstream(tmp / "dup.jsonl") << "{\"problem_id\": \"a\", \"theorem_code\": \"x\"}\n"
                                      "{\"problem_id\": \"a\", \"theorem_code\": \"y\"}\n";
  CHECK(kind_of([&] { load_gold(tmp / "dup.jsonl"); }) == ErrorKind::duplicate_id);
}

TEST_CASE("aggregate of the 312-record fixture matches an independent count") {
  auto path = testing::fixture("opus4_comparisons.jsonl");
  auto recs = load_comparisons(path);
  REQUIRE(recs.size() == 312);

  int n = 0, valid = 0, beq = 0, above = 0;
  double sum = 0;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    if (util::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line);
    ++n;
    bool ok = j["final_status"] == "valid";
    double sim = ok ? j["similarity"].get<double>() : 0.0;
    valid += ok;
    sum += sim;
    if (ok && sim > 0.9) ++above;
    if (ok && j.value("beq_pass", false)) ++beq;
  }

  AggregateOptions opt;
  opt.heatmap_thresholds = {0.5, 0.9};
  auto rows = aggregate_rows(recs, opt);
  REQUIRE(rows.size() == 1);
  const auto& r = rows[0];
  CHECK(r.model == "Claude Opus 4");
  CHECK(r.denominator == n);
  CHECK(r.compile_success == valid);
  CHECK(r.beq_count == beq);
  CHECK(r.gted_above_threshold == above);
  CHECK(r.gted_mean == doctest::Approx(sum / n).epsilon(1e-12));
  CHECK(r.gted_mean_compiled == doctest::Approx(sum / valid).epsilon(1e-12));
  CHECK(r.compile_success == 243);
  CHECK(r.beq_count == 54);
  CHECK(r.gted_above_threshold == 138);

  auto csv = emit_report(rows, ReportFormat::csv, opt.heatmap_thresholds);
  auto lines = util::split_lines(csv);
  CHECK(lines[0] == "model,beq,gted_mean,gted_above,compile,denominator,ge_0.5,ge_0.9");
  CHECK(lines[1].rfind("Claude Opus 4,54,0.51,138,243,312,", 0) == 0);
}

TEST_CASE("aggregation rules") {
  using formalize::FinalStatus;
  std::vector<ComparisonRecord> recs = {
      {"m", "p1", FinalStatus::valid, 1.0, true},   {"m", "p2", FinalStatus::valid, 0.95, false},
      {"m", "p3", FinalStatus::valid, 0.9, std::nullopt}, {"m", "p4", FinalStatus::invalid, 0.0, std::nullopt},
      {"m", "p5", FinalStatus::valid, std::nullopt, std::nullopt}, {"z", "p1", FinalStatus::invalid, 0.0, false},
  };
  AggregateOptions opt;
  opt.heatmap_thresholds = {0.9, 1.0};
  opt.denominator = 10;
  auto rows = aggregate_rows(recs, opt);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].model == "m");
  CHECK(rows[0].beq_count == 1);
  CHECK(rows[0].gted_above_threshold == 2);  // 0.9 itself is not above
  CHECK(rows[0].compile_success == 4);
  CHECK(rows[0].denominator == 10);
  CHECK(rows[0].missing_gold == 1);
  CHECK(rows[0].gted_mean == doctest::Approx((1.0 + 0.95 + 0.9) / 4));
  CHECK(rows[0].heatmap[0] == doctest::Approx(3.0 / 4));
  CHECK(rows[0].heatmap[1] == doctest::Approx(1.0 / 4));

  opt.threshold = 1.0;
  CHECK(aggregate_rows(recs, opt)[0].gted_above_threshold == 1);

  auto dup = recs;
  dup.push_back(recs[0]);
  CHECK(kind_of([&] { aggregate_rows(dup); }) == ErrorKind::duplicate_id);
  AggregateOptions small;
  small.denominator = 3;
  CHECK(kind_of([&] { aggregate_rows(recs, small); }) == ErrorKind::invalid_argument);

  CHECK(best_of_ensemble_rate(recs) == doctest::Approx(4.0 / 5));
}

TEST_CASE("report formats") {
  MetricsRow a{"Alpha, Inc", 3, 0.456, 2, 5, 10, 0.9, 0, {}};
  MetricsRow b{"beta", 7, 0.5, 4, 8, 10, 0.6, 2, {}};
  MetricsRow c{"gamma", 7, 0.1, 1, 2, 10, 0.5, 0, {}};
  std::vector<MetricsRow> rows = {a, b, c};

  auto csv = emit_report(rows, ReportFormat::csv);
  CHECK(csv ==
        "model,beq,gted_mean,gted_above,compile,denominator\n"
        "\"Alpha, Inc\",3,0.46,2,5,10\nbeta,7,0.50,4,8,10\ngamma,7,0.10,1,2,10\n");

  auto md = util::split_lines(emit_report(rows, ReportFormat::markdown));
  CHECK(md[0] == "| Model | BEq | GTED mean | GTED > 0.9 | Compile | Denominator |");
  CHECK(md[2].rfind("| beta | 7 |", 0) == 0);
  CHECK(md[3].rfind("| gamma | 7 |", 0) == 0);
  CHECK(md[4].rfind("| Alpha, Inc | 3 |", 0) == 0);
  CHECK(md.back() == "2 candidate(s) had no gold statement.");

  auto j = nlohmann::json::parse(emit_report(rows, ReportFormat::json));
  CHECK(j["threshold"] == 0.9);
  CHECK(j["rows"][1]["beq"] == 7);
  CHECK(j["rows"][1]["missing_gold"] == 2);

  for (auto& r : rows) r.heatmap = {0.25, 0.125};
  auto heat = util::split_lines(emit_report(rows, ReportFormat::csv, {0.5, 0.75}));
  CHECK(heat[0] == "model,beq,gted_mean,gted_above,compile,denominator,ge_0.5,ge_0.75");
  CHECK(heat[2] == "beta,7,0.50,4,8,10,0.250,0.125");
  CHECK(kind_of([&] { emit_report(rows, ReportFormat::csv); }) == ErrorKind::invalid_argument);
  CHECK(kind_of([&] { emit_report({}, ReportFormat::csv); }) == ErrorKind::invalid_argument);

  CHECK(parse_report_format("markdown") == ReportFormat::markdown);
  CHECK_THROWS_AS(parse_report_format("xml"), Error);

  testing::TempDir tmp;
  write_report(tmp / "r.csv", rows, ReportFormat::csv, {0.5, 0.75});
  CHECK(util::read_file(tmp / "r.csv") == emit_report(rows, ReportFormat::csv, {0.5, 0.75}));
  CHECK(kind_of([&] { write_report(tmp / "missing" / "r.csv", rows, ReportFormat::csv, {0.5, 0.75}); }) ==
        ErrorKind::io);
}

TEST_CASE("ablation table") {
  MetricsRow zs{"m", 0, 0, 0, 3, 12, 0, 0, {}};
  MetricsRow rf{"m", 0, 0, 0, 9, 12, 0, 0, {}};
  MetricsRow only{"n", 0, 0, 0, 6, 12, 0, 0, {}};
  CHECK(emit_ablation({zs}, {rf, only}, ReportFormat::csv) ==
        "model,zs_compile,zs_percent,refined_compile,refined_percent,denominator\n"
        "m,3,25.0,9,75.0,12\nn,0,0.0,6,50.0,12\n");
  CHECK(emit_ablation({zs}, {rf}, ReportFormat::markdown) ==
        "| Model | ZS (%) | Doc+FB (%) |\n|---|---:|---:|\n| m | 25.0 | 75.0 |\n");
}
