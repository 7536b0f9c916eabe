// One line per acceptance criterion. Time limits are pinned here.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "sqrt_theorem.hpp"
#include "helpers.hpp"
#include "proofforge/error.hpp"
#include "proofforge/evalmetrics.hpp"
#include "proofforge/formalize.hpp"
#include "proofforge/hub.hpp"
#include "proofforge/prover.hpp"
#include "ted_oracle.hpp"

using namespace proofforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  bool pass = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string paper_path() { return PF_PAPER; }

// ---------------------------------------------------------------------------

const std::string kFixed = "theorem alg_001 (a b : ℝ) (ha : 0 < a) (hb : 0 < b) (hab : a * b = 1) :\n"
                           "    a ^ 2 + b ^ 2 ≥ 2 := by\n  sorry";
const std::string kBroken = "theorem alg_001 (a b : ℝ) (hab : a * b = 1) :\n"
                            "    a ^ 2 + b ^ 2 ≥ Nat.two_pow_mod_bogus := by\n  sorry";

Result refinement_replay() {
  Result r;
  corpus::Problem p;
  p.id = "alg-001";
  p.statement_nl = "Let a, b be positive reals with ab = 1. Show a^2 + b^2 >= 2.";
  p.category = corpus::Category::Algebra;
  auto validator = leanrun::FakeValidator::from_file(testing::fixture("fake_lean.json"));

  testing::Scripted s;
  s.backend->enqueue("m", testing::lean_reply(kBroken));
  s.backend->enqueue("m", testing::lean_reply(kFixed));
  auto fixed = formalize::formalize(p, testing::model("m"), nullptr, s.gateway, *validator);
  r.expect(fixed.iterations.size() == 2, "fixing fixture took " + std::to_string(fixed.iterations.size()) + " iterations");
  r.expect(fixed.final_status == formalize::FinalStatus::valid, "fixing fixture not valid");
  r.expect(fixed.iterations[0].feedback.find("unknown identifier") != std::string::npos,
           "first feedback lacks the diagnostic");

  testing::Scripted b;
  for (int i = 0; i < 7; ++i) b.backend->enqueue("m", testing::lean_reply(kBroken));
  auto broken = formalize::formalize(p, testing::model("m"), nullptr, b.gateway, *validator);
  r.expect(broken.iterations.size() == 6, "broken fixture took " + std::to_string(broken.iterations.size()) + " iterations");
  r.expect(broken.final_status == formalize::FinalStatus::invalid, "broken fixture not invalid");
  r.expect(b.backend->call_count("m") == 6, "broken fixture made " + std::to_string(b.backend->call_count("m")) + " calls");
  if (r.pass) r.detail = "2 iterations valid; 6 iterations invalid";
  return r;
}

Result ted_oracle() {
  Result r;
  const std::vector<std::string> alphabet = {"a", "b"};
  auto trees = oracle::trees_up_to(4, alphabet);
  std::size_t pairs = 0, mismatches = 0;
  for (const auto& a : trees) {
    auto dist = oracle::bfs(a, alphabet, 4);
    for (const auto& b : trees) {
      ++pairs;
      auto it = dist.find(oracle::key({b}));
      if (it == dist.end() || it->second != evalmetrics::ted(a, b)) ++mismatches;
    }
  }
  r.expect(trees.size() == 102, "expected 102 trees, enumerated " + std::to_string(trees.size()));
  r.expect(mismatches == 0, std::to_string(mismatches) + " mismatches");
  r.detail = std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches" +
             (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

Result gted_properties() {
  Result r;
  std::mt19937_64 rng(7);
  const std::vector<std::string> alphabet = {"∀", "+", "=", "_0", "_1"};
  int identical = 0;
  for (int i = 0; i < 1000; ++i) {
    auto a = oracle::random_tree(rng, 6, alphabet);
    auto b = (i % 10 == 0) ? a : oracle::random_tree(rng, 6, alphabet);
    for (auto norm : {evalmetrics::Normalization::sum, evalmetrics::Normalization::max}) {
      double ab = evalmetrics::gted_similarity(a, b, norm).similarity;
      double ba = evalmetrics::gted_similarity(b, a, norm).similarity;
      r.expect(ab >= 0.0 && ab <= 1.0, "similarity out of range");
      r.expect(ab == ba, "asymmetric on " + a.to_sexpr() + " / " + b.to_sexpr());
      r.expect((ab == 1.0) == (a == b), "similarity 1 disagrees with identity");
    }
    identical += a == b;
  }

  // alpha-normalized identity on statements: renaming bound variables keeps
  // similarity 1, changing the statement does not
  const std::vector<std::string> templates = {"theorem t ({x} {y} : ℕ) (h : {x} < {y}) : {x} + 1 ≤ {y} := sorry",
                                              "theorem t ({x} {y} : ℕ) (h : {x} < {y}) : {y} + 1 ≤ {x} := sorry",
                                              "theorem t ({x} : ℝ) : ∃ {y} : ℝ, {y} > {x} := sorry",
                                              "theorem t ({x} : ℝ) : ∃ {y} : ℝ, {y} ≥ {x} := sorry"};
  const std::vector<std::string> names = {"a", "b", "n", "m", "x₁", "k'"};
  std::uniform_int_distribution<std::size_t> pick_t(0, templates.size() - 1), pick_n(0, names.size() - 1);
  auto instantiate = [&](std::size_t t) {
    std::string x = names[pick_n(rng)], y;
    do y = names[pick_n(rng)]; while (y == x);
    return modelgw::render_template(templates[t], {{"x", x}, {"y", y}});
  };
  for (int i = 0; i < 200; ++i) {
    auto ta = pick_t(rng), tb = pick_t(rng);
    auto a = evalmetrics::parse_optree(instantiate(ta));
    auto b = evalmetrics::parse_optree(instantiate(tb));
    double s = evalmetrics::gted_similarity(a, b).similarity;
    r.expect((s == 1.0) == (ta == tb), "statement pair " + std::to_string(ta) + "/" + std::to_string(tb));
  }
  if (r.pass) r.detail = "1000 pairs (" + std::to_string(identical) + " identical) + 200 renamed statements";
  return r;
}

const std::string kTaskCode = "import Mathlib\n\ntheorem nt_001 : 2 ^ 10 % 7 = 2 := by\n  sorry";

std::string attempt_reply(const std::string& proof) {
  return "<output>\n```lean\nimport Mathlib\n\ntheorem nt_001 : 2 ^ 10 % 7 = 2 := by\n  " + proof + "\n```\n</output>";
}

Result prover_budget() {
  Result r;
  auto validator = leanrun::FakeValidator::from_file(testing::fixture("fake_lean.json"));
  prover::ProofTask task{"nt-001", kTaskCode, "fixture"};
  for (int k : {1, 3, 10}) {
    testing::Scripted s;
    for (int i = 1; i < k; ++i) s.backend->enqueue("p", attempt_reply("omega -- too weak"));
    s.backend->enqueue("p", attempt_reply("norm_num"));
    s.backend->enqueue("p", attempt_reply("norm_num"));
    auto a = prover::prove_multi_turn(task, testing::model("p"), s.gateway, *validator, 10);
    r.expect(a.outcome == prover::Outcome::proved, "k=" + std::to_string(k) + " not proved");
    r.expect(a.turns_used == k, "k=" + std::to_string(k) + " used " + std::to_string(a.turns_used) + " turns");
    r.expect(s.gateway.call_log().size() == static_cast<std::size_t>(k),
             "k=" + std::to_string(k) + " logged " + std::to_string(s.gateway.call_log().size()) + " calls");
  }
  testing::Scripted s;
  for (int i = 0; i < 15; ++i) s.backend->enqueue("p", attempt_reply("omega -- too weak"));
  auto a = prover::prove_multi_turn(task, testing::model("p"), s.gateway, *validator, 10);
  r.expect(a.outcome == prover::Outcome::failed && a.turns_used == 10, "always-failing fixture used " +
                                                                          std::to_string(a.turns_used) + " turns");
  r.expect(s.gateway.call_log().size() == 10, "always-failing fixture logged wrong call count");
  if (r.pass) r.detail = "k=1,3,10 exact; failing fixture stops at 10";
  return r;
}

Result tamper_guard() {
  Result r;
  auto cases = json::parse(util::read_file(testing::fixture("guard_cases.json")));
  int agree = 0;
  for (const auto& c : cases) {
    auto v = prover::check_statement_preserved(c["original"].get<std::string>(), c["submitted"].get<std::string>());
    bool tampered = v.verdict != prover::Guard::ok;
    if (tampered == (c["verdict"] == "tampered")) {
      ++agree;
    } else {
      r.expect(false, "disagree: " + c["name"].get<std::string>());
    }
  }
  r.expect(cases.size() >= 12, "fewer than 12 cases");
  r.detail = std::to_string(agree) + "/" + std::to_string(cases.size()) + " agree" + (r.detail.empty() ? "" : "; " + r.detail);
  return r;
}

std::vector<prover::ProofAttempt> attempts(int solved, int total) {
  std::vector<prover::ProofAttempt> out;
  for (int i = 0; i < total; ++i) {
    prover::ProofAttempt a;
    a.task_id = "imb-" + std::to_string(i);
    a.outcome = i < solved ? prover::Outcome::proved : prover::Outcome::failed;
    out.push_back(a);
  }
  return out;
}

Result pass_at_1_report() {
  Result r;
  auto multi = prover::pass_at_1(attempts(36, 312));
  auto single = prover::pass_at_1(attempts(1, 312));
  r.expect(multi.fraction() == "36/312" && multi.percent() == "11.5%", multi.fraction() + " " + multi.percent());
  r.expect(single.fraction() == "1/312" && single.percent() == "0.3%", single.fraction() + " " + single.percent());

  // the published table and prose
  auto paper = util::read_file(paper_path());
  std::smatch m;
  r.expect(std::regex_search(paper, m, std::regex(R"(GPT-5\s*& 1/312 & \\textbf\{36\}/312)")),
           "paper table row for 36/312 not found");
  r.expect(paper.find("36/312 (11\\%)") != std::string::npos, "paper prose 36/312 (11%) not found");
  r.expect(static_cast<int>(multi.rate * 100) == 11, "rate does not truncate to the published 11%");
  if (r.pass) r.detail = "36/312 11.5%, 1/312 0.3%";
  return r;
}

Result opus4_row() {
  Result r;
  auto recs = evalmetrics::load_comparisons(testing::fixture("opus4_comparisons.jsonl"));
  auto rows = evalmetrics::aggregate_rows(recs);
  auto csv = util::split_lines(evalmetrics::emit_report(rows, evalmetrics::ReportFormat::csv));
  const std::string expected = "Claude Opus 4,54,0.51,138,243,312";
  r.expect(csv.size() == 2 && csv[1] == expected, "csv row '" + (csv.size() > 1 ? csv[1] : "") + "'");

  // the four published cells, read from the table source
  auto paper = util::read_file(paper_path());
  std::smatch m;
  std::regex row(R"(Claude Opus 4\s*& \\textbf\{(\d+)\} & \\textbf\{([\d.]+)\} & \\textbf\{(\d+)\} & \\textbf\{(\d+)\} \\\\)");
  if (!std::regex_search(paper, m, row)) {
    r.expect(false, "table row not found in paper");
  } else {
    std::string published = "Claude Opus 4," + m[1].str() + "," + m[2].str() + "," + m[3].str() + "," + m[4].str() + ",312";
    r.expect(published == expected, "paper row " + published);
  }
  if (r.pass) r.detail = expected;
  return r;
}

Result hub_replay() {
  Result r;
  testing::TempDir tmp;
  hub::StoreOptions opt;
  opt.snapshot_every = 7;
  std::mt19937_64 rng(11);
  int rejected = 0;
  {
    hub::Store s(tmp / "store", opt);
    std::vector<std::int64_t> anns, compiles;
    for (int i = 0; i < 300; ++i) {
      std::string pid = "p" + std::to_string(rng() % 10);
      std::string who = "e" + std::to_string(rng() % 3);
      try {
        switch (rng() % 6) {
          case 0:
            s.append(hub::EventKind::candidate_added, {{"problem_id", pid}, {"model", "m" + std::to_string(rng() % 4)},
                                                       {"iterations", json::array()}, {"final_status", "valid"},
                                                       {"final_code", "x"}});
            break;
          case 1:
            s.append(hub::EventKind::summary_added, {{"problem_id", pid}, {"ranking", json::array()},
                                                     {"common_errors", ""}, {"missing_conditions", ""}, {"raw", ""}});
            break;
          case 2:
            anns.push_back(s.append(hub::EventKind::annotation_saved,
                                    {{"problem_id", pid}, {"final_code", "y"}, {"editor", who}}));
            break;
          case 3:
            s.append(hub::EventKind::annotation_verified,
                     {{"annotation_id", anns.empty() ? 0 : anns[rng() % anns.size()]}, {"editor", who}});
            break;
          case 4:
            compiles.push_back(s.append(hub::EventKind::compile_requested, {{"problem_id", pid}, {"code", "z"}}));
            break;
          default:
            s.append(hub::EventKind::compile_completed,
                     {{"request_id", compiles.empty() ? 0 : compiles[rng() % compiles.size()]},
                      {"result", {{"status", "success"}}}});
        }
      } catch (const Error&) {
        ++rejected;
      }
    }
    r.expect(s.replay_from_log() == s.views(), "replay differs from live views");
    auto live = s.views();
    hub::Store again(tmp / "store", opt);
    r.expect(again.views() == live, "reopened store differs");
  }

  hub::Store c(tmp / "concurrent", {});
  constexpr int kThreads = 8, kEach = 40;
  std::vector<std::thread> ts;
  for (int t = 0; t < kThreads; ++t) {
    ts.emplace_back([&c, t] {
      for (int i = 0; i < kEach; ++i) {
        c.append(hub::EventKind::attempt_added, {{"task_id", "t" + std::to_string(t * kEach + i)}, {"model", "m"},
                                                 {"mode", "multi"}, {"turns", json::array()},
                                                 {"outcome", "failed"}, {"turns_used", 1}});
      }
    });
  }
  for (auto& t : ts) t.join();
  auto events = c.events();
  bool contiguous = events.size() == kThreads * kEach;
  for (std::size_t i = 0; contiguous && i < events.size(); ++i) contiguous = events[i].seq == static_cast<std::int64_t>(i + 1);
  r.expect(contiguous, "concurrent appends left gaps or duplicates");
  r.expect(c.replay_from_log() == c.views(), "concurrent replay differs");
  if (r.pass) {
    r.detail = "300 random appends (" + std::to_string(rejected) + " rejected) replay exactly; " +
               std::to_string(kThreads * kEach) + " concurrent appends contiguous";
  }
  return r;
}

struct Criterion {
  const char* name;
  double limit_s;  // 0 = no limit
  std::function<Result()> run;
};

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  std::vector<Criterion> criteria = {
      {"refinement-loop replay", 5.0, refinement_replay},
      {"TED oracle equivalence", 60.0, ted_oracle},
      {"GTED metric properties", 10.0, gted_properties},
      {"prover budget exactness", 0, prover_budget},
      {"tamper-guard corpus", 0, tamper_guard},
      {"pass@1 report", 0, pass_at_1_report},
      {"published Opus 4 row replay", 0, opus4_row},
      {"hub log replay", 0, hub_replay},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      r.pass = false;
      r.detail += "; exceeded " + std::to_string(c.limit_s) + " s";
    }
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (r.pass ? "PASS " : "FAIL ") << c.name << " (" << timing << "): " << r.detail << "\n";
    failed += !r.pass;
  }

  // needs a real toolchain; reported but not counted when absent
  if (auto root = integration::lean_root()) {
    auto t0 = std::chrono::steady_clock::now();
    auto r = integration::run_sqrt_check(*root, testing::fixture("gold.jsonl").string());
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (r.ok ? "PASS " : "FAIL ") << "toolchain integration (" << secs << "s): " << r.detail << "\n";
    failed += !r.ok;
  } else {
    std::cout << "SKIP toolchain integration: PROOFFORGE_LEAN_ROOT unset or lake not on PATH\n";
  }
  return failed == 0 ? 0 : 1;
}
