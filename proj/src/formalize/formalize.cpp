#include "proofforge/formalize.hpp"

#include <algorithm>
#include <set>

#include "proofforge/error.hpp"
#include "proofforge/hub.hpp"
#include "proofforge/util.hpp"

namespace proofforge::formalize {

using nlohmann::json;

std::string_view to_string(FinalStatus s) {
  switch (s) {
    case FinalStatus::valid: return "valid";
    case FinalStatus::invalid: return "invalid";
    case FinalStatus::aborted_system: return "aborted_system";
  }
  return "";
}

FinalStatus parse_final_status(std::string_view s) {
  for (auto st : {FinalStatus::valid, FinalStatus::invalid, FinalStatus::aborted_system}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorKind::schema, "unknown final status '" + std::string(s) + "'");
}

json to_json(const IterationRecord& r) {
  return {{"index", r.index},
          {"code", r.code},
          {"validation", leanrun::to_json(r.validation)},
          {"feedback", r.feedback},
          {"response", r.response},
          {"system_retries", r.system_retries}};
}

IterationRecord iteration_from_json(const json& j) {
  IterationRecord r;
  r.index = j.at("index").get<int>();
  r.code = j.at("code").get<std::string>();
  r.validation = leanrun::validation_from_json(j.at("validation"));
  r.feedback = j.value("feedback", "");
  r.response = j.value("response", "");
  r.system_retries = j.value("system_retries", 0);
  return r;
}

json to_json(const Candidate& c) {
  json its = json::array();
  for (const auto& r : c.iterations) its.push_back(to_json(r));
  return {{"problem_id", c.problem_id},
          {"model", c.model},
          {"iterations", its},
          {"final_status", to_string(c.final_status)},
          {"final_code", c.final_code}};
}

Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.problem_id = j.at("problem_id").get<std::string>();
  c.model = j.at("model").get<std::string>();
  for (const auto& r : j.at("iterations")) c.iterations.push_back(iteration_from_json(r));
  c.final_status = parse_final_status(j.at("final_status").get<std::string>());
  c.final_code = j.at("final_code").get<std::string>();
  return c;
}

json to_json(const EnsembleSummary& s) {
  json ranking = json::array();
  for (const auto& r : s.ranking) ranking.push_back({{"model", r.model}, {"rank", r.rank}, {"notes", r.notes}});
  return {{"problem_id", s.problem_id},
          {"ranking", ranking},
          {"common_errors", s.common_errors},
          {"missing_conditions", s.missing_conditions},
          {"raw", s.raw},
          {"parsed", s.parsed}};
}

EnsembleSummary summary_from_json(const json& j) {
  EnsembleSummary s;
  s.problem_id = j.at("problem_id").get<std::string>();
  for (const auto& r : j.at("ranking")) {
    s.ranking.push_back({r.at("model").get<std::string>(), r.at("rank").get<int>(), r.value("notes", "")});
  }
  s.common_errors = j.value("common_errors", "");
  s.missing_conditions = j.value("missing_conditions", "");
  s.raw = j.value("raw", "");
  s.parsed = j.value("parsed", false);
  return s;
}

std::string initial_prompt(const corpus::Problem& p, const contextkb::ContextPack* ctx) {
  std::string solution;
  if (p.answer) solution = modelgw::render_template(modelgw::kSolutionSection, {{"solution", *p.answer}});
  std::string documentation;
  if (ctx) {
    documentation = modelgw::render_template(
        modelgw::kDocumentationSection,
        {{"category", std::string(corpus::display_name(ctx->category))}, {"documentation", ctx->body}});
  }
  return modelgw::render_prompt(modelgw::PromptId::formalize_initial,
                                {{"problem_id", p.id},
                                 {"problem_statement", p.statement_nl},
                                 {"solution_section", solution},
                                 {"documentation_section", documentation}});
}

namespace {

bool is_model_failure(const Error& e) {
  return e.kind() == ErrorKind::transport || e.kind() == ErrorKind::provider;
}

std::string feedback_for(const leanrun::ValidationResult& v, std::size_t limit) {
  if (v.status == leanrun::Status::timeout) {
    return "The Lean compiler timed out on this code. Simplify the statement or its definitions.";
  }
  auto text = leanrun::format_feedback(v.diagnostics, limit);
  return text.empty() ? util::trim(v.raw_log) : text;
}

leanrun::ValidationResult no_code_result() {
  leanrun::ValidationResult v;
  v.status = leanrun::Status::math_error;
  v.diagnostics.push_back({leanrun::Severity::error, "", 1, 0, std::string(kNoCodeFeedback),
                           leanrun::DiagClass::other});
  return v;
}

void finish(Candidate& c, FinalStatus status) {
  c.final_status = status;
  c.final_code.clear();
  for (auto it = c.iterations.rbegin(); it != c.iterations.rend(); ++it) {
    if (!it->code.empty()) {
      c.final_code = it->code;
      break;
    }
  }
}

}  // namespace

Candidate formalize(const corpus::Problem& p, const modelgw::ModelSpec& spec,
                    const contextkb::ContextPack* ctx, modelgw::Gateway& gateway,
                    leanrun::Validator& validator, const Options& options) {
  if (options.max_iterations < 1) throw Error(ErrorKind::invalid_argument, "max_iterations must be at least 1");
  if (p.kind != corpus::Kind::prove) {
    throw Error(ErrorKind::invalid_argument, "problem '" + p.id + "' must be framed as prove-type first");
  }
  if (ctx && options.use_context && p.category && ctx->category != *p.category) {
    throw Error(ErrorKind::invalid_argument, "context pack category does not match problem '" + p.id + "'");
  }

  Candidate c;
  c.problem_id = p.id;
  c.model = spec.name;
  const std::string initial = initial_prompt(p, options.use_context ? ctx : nullptr);

  for (int i = 1; i <= options.max_iterations; ++i) {
    modelgw::Transcript t;
    t.user(initial);
    if (i > 1) {
      const auto& prev = c.iterations.back();
      t.assistant(prev.response);
      t.user(modelgw::render_prompt(modelgw::PromptId::formalize_refine, {{"lean_error", prev.feedback}}));
    }

    IterationRecord rec;
    rec.index = i;
    try {
      rec.response = gateway.complete(spec, t);
    } catch (const Error& e) {
      if (!is_model_failure(e)) throw;
      rec.validation.status = leanrun::Status::system_error;
      rec.validation.raw_log = std::string("model call failed: ") + e.what();
      c.iterations.push_back(std::move(rec));
      finish(c, FinalStatus::aborted_system);
      return c;
    }

    try {
      rec.code = modelgw::extract_code_block(rec.response);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::extraction) throw;
      rec.validation = no_code_result();
      rec.feedback = std::string(kNoCodeFeedback);
      c.iterations.push_back(std::move(rec));
      continue;
    }

    for (int attempt = 0;; ++attempt) {
      rec.validation = validator.validate(rec.code);
      rec.system_retries = attempt;
      if (rec.validation.status != leanrun::Status::system_error) break;
      if (attempt >= options.system_retries) {
        c.iterations.push_back(std::move(rec));
        finish(c, FinalStatus::aborted_system);
        return c;
      }
    }

    if (rec.validation.status == leanrun::Status::success) {
      c.iterations.push_back(std::move(rec));
      finish(c, FinalStatus::valid);
      return c;
    }
    rec.feedback = feedback_for(rec.validation, options.feedback_limit);
    c.iterations.push_back(std::move(rec));
  }
  finish(c, FinalStatus::invalid);
  return c;
}

std::vector<RankEntry> fallback_ranking(const std::vector<Candidate>& cands) {
  std::vector<const Candidate*> order;
  for (const auto& c : cands) order.push_back(&c);
  std::stable_sort(order.begin(), order.end(), [](const Candidate* a, const Candidate* b) {
    bool va = a->final_status == FinalStatus::valid;
    bool vb = b->final_status == FinalStatus::valid;
    if (va != vb) return va;
    return a->model < b->model;
  });
  std::vector<RankEntry> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.push_back({order[i]->model, static_cast<int>(i + 1), ""});
  }
  return out;
}

std::optional<EnsembleSummary> parse_summary(std::string_view raw, const std::vector<std::string>& models) {
  auto open = raw.rfind("```json");
  if (open == std::string_view::npos) return std::nullopt;
  auto body_start = raw.find('\n', open);
  if (body_start == std::string_view::npos) return std::nullopt;
  auto close = raw.find("```", body_start);
  auto body = raw.substr(body_start + 1, close == std::string_view::npos ? std::string_view::npos
                                                                          : close - body_start - 1);
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (!j.is_object() || !j.contains("ranking") || !j["ranking"].is_array()) return std::nullopt;

  EnsembleSummary s;
  std::set<std::string> seen;
  for (const auto& r : j["ranking"]) {
    if (!r.is_object() || !r.contains("model") || !r["model"].is_string()) return std::nullopt;
    auto m = r["model"].get<std::string>();
    if (!seen.insert(m).second) return std::nullopt;
    std::string notes = r.contains("notes") && r["notes"].is_string() ? r["notes"].get<std::string>() : "";
    s.ranking.push_back({m, static_cast<int>(s.ranking.size() + 1), notes});
  }
  if (seen != std::set<std::string>(models.begin(), models.end()) || seen.size() != models.size()) {
    return std::nullopt;
  }
  auto text = [&](const char* key) {
    return j.contains(key) && j[key].is_string() ? j[key].get<std::string>() : std::string();
  };
  s.common_errors = text("common_errors");
  s.missing_conditions = text("missing_conditions");
  s.raw = std::string(raw);
  s.parsed = true;
  return s;
}

EnsembleSummary summarize(const corpus::Problem& p, const std::vector<Candidate>& cands,
                          const modelgw::ModelSpec& summarizer, modelgw::Gateway& gateway) {
  if (cands.empty()) throw Error(ErrorKind::invalid_argument, "summarize needs at least one candidate");
  std::string listing;
  std::vector<std::string> models;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& c = cands[i];
    models.push_back(c.model);
    if (i) listing += "\n\n";
    listing += "### Candidate " + std::to_string(i + 1) + ": " + c.model + " (" +
               std::string(to_string(c.final_status)) + ")\n```lean\n" + c.final_code + "\n```";
  }
  modelgw::Transcript t;
  t.user(modelgw::render_prompt(modelgw::PromptId::summary, {{"problem_id", p.id},
                                                            {"problem_statement", p.statement_nl},
                                                            {"candidates", listing}}));
  EnsembleSummary s;
  s.problem_id = p.id;
  std::string raw;
  try {
    raw = gateway.complete(summarizer, t);
  } catch (const Error& e) {
    if (!is_model_failure(e)) throw;
    s.raw = std::string("summarizer failed: ") + e.what();
    return s;
  }
  if (auto parsed = parse_summary(raw, models)) {
    parsed->problem_id = p.id;
    return *parsed;
  }
  s.ranking = fallback_ranking(cands);
  s.raw = raw;
  return s;
}

EnsembleResult run_ensemble(const corpus::Problem& p, const std::vector<modelgw::ModelSpec>& models,
                            const contextkb::ContextPack* ctx, const modelgw::ModelSpec& summarizer,
                            modelgw::Gateway& gateway, leanrun::Validator& validator, hub::Store* store,
                            const Options& options, std::size_t workers) {
  if (models.empty()) throw Error(ErrorKind::invalid_argument, "ensemble needs at least one model");
  EnsembleResult out;
  out.candidates.resize(models.size());
  util::parallel_for(models.size(), workers, [&](std::size_t i) {
    out.candidates[i] = formalize(p, models[i], ctx, gateway, validator, options);
  });
  out.summary = summarize(p, out.candidates, summarizer, gateway);
  if (store) {
    for (const auto& c : out.candidates) store->append(hub::EventKind::candidate_added, to_json(c));
    store->append(hub::EventKind::summary_added, to_json(out.summary));
  }
  return out;
}

}  // namespace proofforge::formalize
