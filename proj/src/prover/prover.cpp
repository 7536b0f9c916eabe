#include "proofforge/prover.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "proofforge/error.hpp"
#include "proofforge/util.hpp"

namespace proofforge::prover {

using nlohmann::json;
using leanrun::Token;

std::string_view to_string(Mode m) { return m == Mode::single ? "single" : "multi"; }

std::string_view to_string(Guard g) {
  switch (g) {
    case Guard::ok: return "ok";
    case Guard::tampered: return "tampered";
    case Guard::no_code: return "no_code";
  }
  return "";
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::proved: return "proved";
    case Outcome::failed: return "failed";
    case Outcome::gave_up: return "gave_up";
  }
  return "";
}

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const E (&values)[N], const char* what) {
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::schema, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr Mode kModes[] = {Mode::single, Mode::multi};
constexpr Guard kGuards[] = {Guard::ok, Guard::tampered, Guard::no_code};
constexpr Outcome kOutcomes[] = {Outcome::proved, Outcome::failed, Outcome::gave_up};

}  // namespace

void check_task(const ProofTask& task) {
  int count = 0;
  for (const auto& t : leanrun::lex(task.theorem_code)) {
    if (t.kind == leanrun::TokKind::ident && t.text == "sorry") ++count;
  }
  if (count != 1) {
    throw Error(ErrorKind::invalid_argument, "task '" + task.problem_id + "' must contain exactly one sorry, found " +
                                                 std::to_string(count));
  }
}

ProofTask task_from_json(const json& j) {
  ProofTask t;
  t.problem_id = j.at("problem_id").get<std::string>();
  t.theorem_code = j.at("theorem_code").get<std::string>();
  t.source_bench = j.value("source_bench", "");
  check_task(t);
  return t;
}

json to_json(const ProofTask& t) {
  return {{"problem_id", t.problem_id}, {"theorem_code", t.theorem_code}, {"source_bench", t.source_bench}};
}

std::vector<ProofTask> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read tasks " + path.string());
  std::vector<ProofTask> out;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(task_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::malformed_record, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(out.back().problem_id).second) {
      throw Error(ErrorKind::duplicate_id, "duplicate task '" + out.back().problem_id + "' on line " +
                                               std::to_string(lineno));
    }
  }
  return out;
}

json to_json(const Turn& t) {
  return {{"prompt_digest", t.prompt_digest},
          {"response", t.response},
          {"code", t.code ? json(*t.code) : json(nullptr)},
          {"validation", t.validation ? leanrun::to_json(*t.validation) : json(nullptr)},
          {"guard", to_string(t.guard)},
          {"note", t.note}};
}

json to_json(const ProofAttempt& a) {
  json turns = json::array();
  for (const auto& t : a.turns) turns.push_back(to_json(t));
  return {{"task_id", a.task_id},
          {"model", a.model},
          {"mode", to_string(a.mode)},
          {"turns", turns},
          {"outcome", to_string(a.outcome)},
          {"turns_used", a.turns_used},
          {"error", a.error},
          {"transcript", modelgw::transcript_to_json(a.transcript)}};
}

ProofAttempt attempt_from_json(const json& j) {
  ProofAttempt a;
  a.task_id = j.at("task_id").get<std::string>();
  a.model = j.at("model").get<std::string>();
  a.mode = parse_enum(j.at("mode").get<std::string>(), kModes, "mode");
  for (const auto& tj : j.at("turns")) {
    Turn t;
    t.prompt_digest = tj.value("prompt_digest", "");
    t.response = tj.value("response", "");
    if (tj.contains("code") && !tj["code"].is_null()) t.code = tj["code"].get<std::string>();
    if (tj.contains("validation") && !tj["validation"].is_null()) {
      t.validation = leanrun::validation_from_json(tj["validation"]);
    }
    t.guard = parse_enum(tj.at("guard").get<std::string>(), kGuards, "guard");
    t.note = tj.value("note", "");
    a.turns.push_back(std::move(t));
  }
  a.outcome = parse_enum(j.at("outcome").get<std::string>(), kOutcomes, "outcome");
  a.turns_used = j.at("turns_used").get<int>();
  a.error = j.value("error", "");
  if (j.contains("transcript")) a.transcript = modelgw::transcript_from_json(j["transcript"]);
  return a;
}

namespace {

// Tokens minus header lines: any line whose first token is import, open or
// set_option.
std::vector<Token> significant_tokens(std::string_view code) {
  auto all = leanrun::lex(code);
  std::vector<Token> out;
  int skip_line = -1;
  int last_line = -1;
  for (auto& t : all) {
    if (t.line != last_line) {
      last_line = t.line;
      skip_line = (t.is("import") || t.is("open") || t.is("set_option")) ? t.line : -1;
    }
    if (t.line == skip_line) continue;
    out.push_back(std::move(t));
  }
  return out;
}

bool opens(const Token& t) { return t.is("(") || t.is("[") || t.is("{") || t.is("⟨") || t.is("⦃"); }
bool closes(const Token& t) { return t.is(")") || t.is("]") || t.is("}") || t.is("⟩") || t.is("⦄"); }

// Index one past the proof delimiter of the declaration holding the sorry.
std::optional<std::size_t> statement_end(const std::vector<Token>& toks) {
  std::optional<std::size_t> sorry;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].kind == leanrun::TokKind::ident && toks[i].is("sorry")) sorry = i;
  }
  if (!sorry) return std::nullopt;
  std::optional<std::size_t> decl;
  for (std::size_t i = 0; i < *sorry; ++i) {
    if (toks[i].is("theorem") || toks[i].is("lemma") || toks[i].is("example")) decl = i;
  }
  if (!decl) return std::nullopt;
  int depth = 0;
  for (std::size_t i = *decl; i < *sorry; ++i) {
    if (opens(toks[i])) ++depth;
    if (closes(toks[i])) --depth;
    if (depth == 0 && toks[i].is(":=")) return i + 1;
  }
  return std::nullopt;
}

const std::set<std::string> kBanned = {"sorry",      "admit",  "sorryAx",        "native_decide",
                                       "axiom",      "abbrev", "Lean.ofReduceBool", "implemented_by",
                                       "extern",     "opaque", "unsafe",         "ofReduceBool"};

}  // namespace

GuardVerdict check_statement_preserved(std::string_view original, std::string_view submitted) {
  auto orig = significant_tokens(original);
  auto end = statement_end(orig);
  if (!end) return {Guard::tampered, "original has no theorem with a sorry proof"};

  auto sub = significant_tokens(submitted);
  if (sub.size() < *end) return {Guard::tampered, "submission is shorter than the theorem statement"};
  for (std::size_t i = 0; i < *end; ++i) {
    if (sub[i].text != orig[i].text) {
      return {Guard::tampered, "statement changed at line " + std::to_string(sub[i].line) + ": expected '" +
                                   orig[i].text + "', found '" + sub[i].text + "'"};
    }
  }
  for (std::size_t i = *end; i < sub.size(); ++i) {
    std::string word = sub[i].text;
    if (!word.empty() && word.front() == '@') word.erase(0, 1);
    if (kBanned.count(word)) {
      return {Guard::tampered, "proof uses '" + word + "' at line " + std::to_string(sub[i].line)};
    }
  }
  return {Guard::ok, ""};
}

std::optional<std::string> extract_proof_code(std::string_view response) {
  std::string code;
  if (auto sec = modelgw::tagged_section(response, "output")) {
    auto fenced = modelgw::last_fenced_block(*sec);
    code = fenced ? *fenced : *sec;
  } else if (auto fenced = modelgw::last_fenced_block(response)) {
    code = *fenced;
  } else {
    return std::nullopt;
  }
  code = util::trim(code);
  if (util::trim(leanrun::strip_comments(code)).empty()) return std::nullopt;
  return code;
}

namespace {

constexpr std::string_view kTamperFeedback = "you are not allowed to change the theorem statement";

ProofAttempt run(const ProofTask& task, const modelgw::ModelSpec& spec, modelgw::Gateway& gateway,
                 leanrun::Validator& validator, Mode mode, int max_turns, const ProverOptions& options) {
  check_task(task);
  if (max_turns < 1) throw Error(ErrorKind::invalid_argument, "max_turns must be at least 1");

  ProofAttempt a;
  a.task_id = task.problem_id;
  a.model = spec.name;
  a.mode = mode;
  a.outcome = Outcome::failed;
  std::string feedback;

  for (int turn = 1; turn <= max_turns; ++turn) {
    std::string prompt;
    if (turn == 1 && mode == Mode::single) {
      prompt = modelgw::render_prompt(modelgw::PromptId::atp_single, {{"custom_formalization", task.theorem_code}});
    } else if (turn == 1) {
      prompt = modelgw::render_prompt(modelgw::PromptId::atp_multi_initial,
                                      {{"MAX_TURNS", std::to_string(max_turns)},
                                       {"custom_formalization", task.theorem_code}});
    } else {
      prompt = modelgw::render_prompt(
          modelgw::PromptId::atp_multi_feedback,
          {{"custom_formalization", task.theorem_code},
           {"validation_errors", feedback},
           {"last_turn_reminder", turn == max_turns ? std::string(modelgw::kLastTurnReminder) : ""}});
    }
    a.transcript.user(prompt);

    Turn tr;
    tr.prompt_digest = util::sha256_hex(prompt);
    try {
      tr.response = gateway.complete(spec, a.transcript);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport && e.kind() != ErrorKind::provider) throw;
      a.transcript.messages.pop_back();
      a.error = std::string("model call failed: ") + e.what();
      break;
    }
    a.transcript.assistant(tr.response);

    auto code = extract_proof_code(tr.response);
    if (!code) {
      tr.guard = Guard::no_code;
      tr.note = "no code in response";
      a.turns.push_back(std::move(tr));
      a.outcome = Outcome::gave_up;
      break;
    }
    tr.code = *code;

    auto verdict = check_statement_preserved(task.theorem_code, *code);
    if (verdict.verdict != Guard::ok) {
      tr.guard = Guard::tampered;
      tr.note = verdict.reason;
      feedback = std::string(kTamperFeedback) + " (" + verdict.reason + ")";
      a.turns.push_back(std::move(tr));
      continue;
    }

    leanrun::ValidationResult v;
    for (int attempt = 0;; ++attempt) {
      v = validator.validate(*code);
      if (v.status != leanrun::Status::system_error || attempt >= options.system_retries) break;
    }
    tr.validation = v;
    if (v.status == leanrun::Status::system_error) {
      a.turns.push_back(std::move(tr));
      a.error = "toolchain failure: " + util::trim(v.raw_log);
      break;
    }
    if (v.status == leanrun::Status::success && !v.contains_sorry) {
      a.turns.push_back(std::move(tr));
      a.outcome = Outcome::proved;
      break;
    }
    if (v.status == leanrun::Status::timeout) {
      feedback = "The Lean compiler timed out.\n" + v.raw_log;
    } else if (v.status == leanrun::Status::success) {
      feedback = "The proof still relies on sorry.\n" + v.raw_log;
    } else {
      feedback = v.raw_log;
    }
    a.turns.push_back(std::move(tr));
  }
  a.turns_used = static_cast<int>(a.turns.size());
  return a;
}

}  // namespace

ProofAttempt prove_single_turn(const ProofTask& task, const modelgw::ModelSpec& spec, modelgw::Gateway& gateway,
                               leanrun::Validator& validator, const ProverOptions& options) {
  return run(task, spec, gateway, validator, Mode::single, 1, options);
}

ProofAttempt prove_multi_turn(const ProofTask& task, const modelgw::ModelSpec& spec, modelgw::Gateway& gateway,
                              leanrun::Validator& validator, int max_turns, const ProverOptions& options) {
  return run(task, spec, gateway, validator, Mode::multi, max_turns, options);
}

std::string PassAt1::fraction() const { return std::to_string(solved) + "/" + std::to_string(total); }

std::string PassAt1::percent() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", rate * 100.0);
  return buf;
}

PassAt1 pass_at_1(const std::vector<ProofAttempt>& attempts) {
  PassAt1 r;
  std::set<std::string> seen;
  for (const auto& a : attempts) {
    if (!seen.insert(a.task_id).second) {
      throw Error(ErrorKind::invalid_argument, "more than one attempt for task '" + a.task_id + "'");
    }
    ++r.total;
    if (a.outcome == Outcome::proved) ++r.solved;
  }
  r.rate = r.total ? static_cast<double>(r.solved) / r.total : 0.0;
  return r;
}

}  // namespace proofforge::prover
