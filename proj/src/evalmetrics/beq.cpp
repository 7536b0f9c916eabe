#include <algorithm>
#include <map>
#include <set>

#include "decl.hpp"
#include "proofforge/error.hpp"
#include "proofforge/evalmetrics.hpp"
#include "proofforge/util.hpp"

namespace proofforge::evalmetrics {

namespace {

struct Parts {
  std::string name;
  std::vector<std::string> header;                            // import/open/set_option lines
  std::vector<std::pair<std::string, std::string>> aux;       // (key, text) declarations before the theorem
  std::string binders;
  std::string statement;
};

bool is_header_line(const std::string& line) {
  return util::starts_with(line, "import ") || util::starts_with(line, "open ") ||
         util::starts_with(line, "set_option ");
}

bool is_modifier_only(const std::string& block) {
  auto toks = leanrun::lex(block);
  static const std::set<std::string> mods = {"private", "protected", "noncomputable", "@[", "@", "["};
  int depth = 0;
  for (const auto& t : toks) {
    if (t.is("@[") || t.is("[")) ++depth;
    else if (t.is("]")) --depth;
    else if (depth == 0 && !mods.count(t.text)) return false;
  }
  return true;
}

std::string aux_key(const std::string& block) {
  static const std::set<std::string> kw = {"def", "theorem", "lemma", "abbrev", "instance", "structure",
                                           "inductive", "class", "axiom", "opaque", "notation", "macro"};
  auto toks = leanrun::lex(block);
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (kw.count(toks[i].text) && toks[i + 1].kind == leanrun::TokKind::ident) return toks[i + 1].text;
  }
  return block;
}

std::string slice(std::string_view code, const std::vector<leanrun::Token>& toks, std::size_t from,
                  std::size_t to) {
  if (from >= to) return {};
  std::size_t a = toks[from].offset;
  std::size_t b = to < toks.size() ? toks[to].offset : code.size();
  return util::trim(leanrun::strip_comments(code.substr(a, b - a)));
}

Parts split(std::string_view code) {
  auto toks = leanrun::lex(code);
  auto span = detail::find_decl(toks);
  Parts p;
  if (span.start > span.decl + 1) p.name = toks[span.decl + 1].text;
  p.binders = slice(code, toks, span.start, span.colon);
  p.statement = slice(code, toks, span.colon + 1, span.end);

  std::string prefix = leanrun::strip_comments(code.substr(0, toks[span.decl].offset));
  std::vector<std::string> blocks;
  for (const auto& raw : util::split_lines(prefix)) {
    std::string line = util::trim(raw);
    if (line.empty()) continue;
    if (is_header_line(line)) {
      p.header.push_back(line);
    } else if (!raw.empty() && raw[0] != ' ' && raw[0] != '\t') {
      blocks.push_back(raw);
    } else if (!blocks.empty()) {
      blocks.back() += "\n" + raw;
    } else {
      blocks.push_back(raw);
    }
  }
  for (auto& b : blocks) {
    if (is_modifier_only(b)) continue;
    std::string text = util::trim(b);
    p.aux.emplace_back(aux_key(text), text);
  }
  return p;
}

std::string quantified(const Parts& p) {
  if (p.binders.empty()) return p.statement;
  return "∀ " + p.binders + ", " + p.statement;
}

const std::set<std::string> kReserved = {"beq_forward", "beq_backward"};

}  // namespace

std::string beq_goal_file(std::string_view hyp, std::string_view goal, std::string_view name) {
  Parts h = split(hyp), g = split(goal);
  for (const Parts* p : {&h, &g}) {
    if (kReserved.count(p->name) || p->name == name) {
      throw Error(ErrorKind::construction, "theorem " + p->name + " collides with the generated theorem name");
    }
  }

  std::vector<std::string> header;
  for (const auto& line : h.header) {
    if (std::find(header.begin(), header.end(), line) == header.end()) header.push_back(line);
  }
  for (const auto& line : g.header) {
    if (std::find(header.begin(), header.end(), line) == header.end()) header.push_back(line);
  }
  // imports must come first
  std::stable_partition(header.begin(), header.end(),
                        [](const std::string& l) { return util::starts_with(l, "import "); });

  std::vector<std::pair<std::string, std::string>> aux;
  std::map<std::string, std::string> seen;
  for (const Parts* p : {&h, &g}) {
    for (const auto& [key, text] : p->aux) {
      auto it = seen.find(key);
      if (it == seen.end()) {
        seen.emplace(key, text);
        aux.emplace_back(key, text);
      } else if (it->second != text) {
        std::string owner = p->name.empty() ? std::string("example") : p->name;
        throw Error(ErrorKind::construction,
                    "theorem " + owner + ": conflicting definitions of " + key + " in the two files");
      }
    }
    if (!p->name.empty() && seen.count(p->name)) {
      throw Error(ErrorKind::construction, "theorem " + p->name + " collides with an auxiliary declaration");
    }
  }

  std::string out;
  for (const auto& line : header) out += line + "\n";
  if (!header.empty()) out += "\n";
  for (const auto& [key, text] : aux) out += text + "\n\n";
  out += "theorem " + std::string(name) + " (h_src : " + quantified(h) + ") :\n    " + quantified(g) +
         " := by\n  sorry\n";
  return out;
}

BeqResult beq_check(std::string_view thm_a, std::string_view thm_b, const modelgw::ModelSpec& prover_spec,
                    modelgw::Gateway& gateway, leanrun::Validator& validator, int budget) {
  if (budget < 1) throw Error(ErrorKind::invalid_argument, "beq budget must be at least 1");
  BeqResult r;
  try {
    if (parse_optree(thm_a) == parse_optree(thm_b)) {
      r.forward_proved = r.backward_proved = r.pass = r.fast_path = true;
      return r;
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::parse) throw;
  }

  auto direction = [&](std::string_view hyp, std::string_view goal, const char* name) {
    prover::ProofTask task{name, beq_goal_file(hyp, goal, name), "beq"};
    return prover::prove_multi_turn(task, prover_spec, gateway, validator, budget);
  };
  r.forward = direction(thm_a, thm_b, "beq_forward");
  r.backward = direction(thm_b, thm_a, "beq_backward");
  r.forward_proved = r.forward->outcome == prover::Outcome::proved;
  r.backward_proved = r.backward->outcome == prover::Outcome::proved;
  r.pass = r.forward_proved && r.backward_proved;
  return r;
}

}  // namespace proofforge::evalmetrics
