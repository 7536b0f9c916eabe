#include "proofforge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "proofforge/error.hpp"
#include "proofforge/modelgw.hpp"
#include "proofforge/util.hpp"

namespace proofforge::corpus {

using nlohmann::json;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Geometry: return "Geometry";
    case Category::Algebra: return "Algebra";
    case Category::SetTheoryCombinatorics: return "SetTheoryCombinatorics";
    case Category::NumberTheory: return "NumberTheory";
  }
  return "";
}

std::string_view display_name(Category c) {
  switch (c) {
    case Category::Geometry: return "Geometry";
    case Category::Algebra: return "Algebra";
    case Category::SetTheoryCombinatorics: return "Set Theory & Combinatorics";
    case Category::NumberTheory: return "Number Theory";
  }
  return "";
}

std::optional<Category> parse_category(std::string_view text) {
  // keep letters only: "Set theory & Combinatorics." -> "settheorycombinatorics"
  std::string key;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  static const std::map<std::string, Category> kNames = {
      {"geometry", Category::Geometry},
      {"algebra", Category::Algebra},
      {"settheorycombinatorics", Category::SetTheoryCombinatorics},
      {"settheoryandcombinatorics", Category::SetTheoryCombinatorics},
      {"combinatorics", Category::SetTheoryCombinatorics},
      {"numbertheory", Category::NumberTheory},
  };
  auto it = kNames.find(key);
  if (it == kNames.end()) return std::nullopt;
  return it->second;
}

std::string_view to_string(Kind k) { return k == Kind::prove ? "prove" : "solve"; }

void check_invariants(const Problem& p) {
  if (p.id.empty()) throw Error(ErrorKind::malformed_record, "problem id is empty");
  if (p.kind == Kind::solve && (!p.answer || p.answer->empty())) {
    throw Error(ErrorKind::malformed_record, "solve-type problem '" + p.id + "' has no answer");
  }
  if (p.kind == Kind::prove && p.answer && !p.reframed_from_solve) {
    throw Error(ErrorKind::malformed_record, "prove-type problem '" + p.id + "' must not carry an answer");
  }
}

Problem problem_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::malformed_record, "record is not a JSON object");
  static const std::vector<std::string> kKeys = {"id",     "source",   "statement_nl",  "kind",
                                                 "answer", "category", "informal_proof"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(ErrorKind::malformed_record, "unknown key '" + key + "'");
    }
  }
  auto req_string = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) {
      throw Error(ErrorKind::malformed_record, std::string("missing or non-string '") + key + "'");
    }
    return j[key].get<std::string>();
  };
  auto opt_string = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) throw Error(ErrorKind::malformed_record, std::string("non-string '") + key + "'");
    return j[key].get<std::string>();
  };

  Problem p;
  p.id = req_string("id");
  p.source = j.contains("source") ? req_string("source") : std::string();
  p.statement_nl = req_string("statement_nl");
  auto kind = req_string("kind");
  if (kind == "prove") {
    p.kind = Kind::prove;
  } else if (kind == "solve") {
    p.kind = Kind::solve;
  } else {
    throw Error(ErrorKind::malformed_record, "kind must be \"prove\" or \"solve\", got \"" + kind + "\"");
  }
  p.answer = opt_string("answer");
  if (auto cat = opt_string("category")) {
    p.category = parse_category(*cat);
    if (!p.category) throw Error(ErrorKind::malformed_record, "unknown category '" + *cat + "'");
  }
  p.informal_proof = opt_string("informal_proof");
  check_invariants(p);
  return p;
}

json problem_to_json(const Problem& p) {
  json j = {{"id", p.id}, {"source", p.source}, {"statement_nl", p.statement_nl}, {"kind", to_string(p.kind)}};
  if (p.answer) j["answer"] = *p.answer;
  if (p.category) j["category"] = to_string(*p.category);
  if (p.informal_proof) j["informal_proof"] = *p.informal_proof;
  return j;
}

std::vector<Problem> parse_corpus(std::istream& in) {
  std::vector<Problem> problems;
  std::map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    Problem p;
    try {
      p = problem_from_json(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::malformed_record,
                  "line " + std::to_string(lineno) + ": invalid JSON: " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, inserted] = first_line.emplace(p.id, lineno);
    if (!inserted) {
      throw Error(ErrorKind::duplicate_id, "duplicate id '" + p.id + "' on lines " +
                                               std::to_string(it->second) + " and " +
                                               std::to_string(lineno));
    }
    problems.push_back(std::move(p));
  }
  return problems;
}

std::vector<Problem> ingest_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read corpus " + path.string());
  return parse_corpus(in);
}

std::string serialize_corpus(const std::vector<Problem>& problems) {
  std::string out;
  for (const auto& p : problems) {
    out += problem_to_json(p).dump();
    out += '\n';
  }
  return out;
}

Category label_category(Problem& p, modelgw::Gateway& gateway, const modelgw::ModelSpec& spec) {
  modelgw::Transcript t;
  t.user(modelgw::render_prompt(modelgw::PromptId::category_label,
                                {{"problem_statement", p.statement_nl}}));
  std::string reply = gateway.complete(spec, t);
  auto cat = parse_category(reply);
  if (!cat) {
    throw Error(ErrorKind::unrecognized_label,
                "model reply for '" + p.id + "' names no known category", reply);
  }
  p.category = *cat;
  return *cat;
}

void label_all(std::vector<Problem>& problems, modelgw::Gateway& gateway,
               const modelgw::ModelSpec& spec) {
  for (auto& p : problems) {
    if (!p.category) label_category(p, gateway, spec);
  }
}

Problem frame_solve_as_prove(const Problem& p) {
  if (p.kind == Kind::prove) return p;
  if (!p.answer || util::trim(*p.answer).empty()) {
    throw Error(ErrorKind::invalid_argument, "solve-type problem '" + p.id + "' has an empty answer");
  }
  Problem framed = p;
  framed.kind = Kind::prove;
  framed.reframed_from_solve = true;
  framed.statement_nl = p.statement_nl + "\n\nProve that the answer is: " + util::trim(*p.answer) + ".";
  return framed;
}

}  // namespace proofforge::corpus
