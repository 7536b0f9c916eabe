#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "proofforge/contextkb.hpp"
#include "proofforge/corpus.hpp"
#include "proofforge/leanrun.hpp"
#include "proofforge/modelgw.hpp"

namespace proofforge::hub {
class Store;
}

namespace proofforge::formalize {

struct IterationRecord {
  int index = 1;
  std::string code;
  leanrun::ValidationResult validation;
  std::string feedback;  // empty on the successful or final iteration
  std::string response;  // raw model text
  int system_retries = 0;

  bool operator==(const IterationRecord&) const = default;
};

enum class FinalStatus { valid, invalid, aborted_system };
std::string_view to_string(FinalStatus s);
FinalStatus parse_final_status(std::string_view s);

struct Candidate {
  std::string problem_id;
  std::string model;
  std::vector<IterationRecord> iterations;
  FinalStatus final_status = FinalStatus::invalid;
  std::string final_code;

  bool operator==(const Candidate&) const = default;
};

struct RankEntry {
  std::string model;
  int rank = 1;
  std::string notes;
  bool operator==(const RankEntry&) const = default;
};

struct EnsembleSummary {
  std::string problem_id;
  std::vector<RankEntry> ranking;
  std::string common_errors;
  std::string missing_conditions;
  std::string raw;
  bool parsed = false;  // false when the ranking is the fallback order

  bool operator==(const EnsembleSummary&) const = default;
};

nlohmann::json to_json(const IterationRecord& r);
IterationRecord iteration_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnsembleSummary& s);
EnsembleSummary summary_from_json(const nlohmann::json& j);

struct Options {
  int max_iterations = 6;
  /// Extra validations allowed per iteration when the toolchain itself fails.
  int system_retries = 2;
  std::size_t feedback_limit = 20;
  /// Zero-shot runs leave out the documentation section.
  bool use_context = true;
};

inline constexpr std::string_view kNoCodeFeedback = "response contained no Lean code block";

/// Initial prompt for a problem. `ctx` may be null (zero-shot).
std::string initial_prompt(const corpus::Problem& p, const contextkb::ContextPack* ctx);

/// Iterative refinement of one model's formalization. The transcript sent
/// to the model is always [initial] or [initial, previous answer, refine].
Candidate formalize(const corpus::Problem& p, const modelgw::ModelSpec& spec,
                    const contextkb::ContextPack* ctx, modelgw::Gateway& gateway,
                    leanrun::Validator& validator, const Options& options = {});

/// Fallback order: valid first, then by model name.
std::vector<RankEntry> fallback_ranking(const std::vector<Candidate>& cands);

/// Parses the last ```json block of a summarizer reply. Returns nullopt when
/// it is missing, malformed or not a permutation of `models`.
std::optional<EnsembleSummary> parse_summary(std::string_view raw, const std::vector<std::string>& models);

EnsembleSummary summarize(const corpus::Problem& p, const std::vector<Candidate>& cands,
                          const modelgw::ModelSpec& summarizer, modelgw::Gateway& gateway);

struct EnsembleResult {
  std::vector<Candidate> candidates;  // same order as the model list
  EnsembleSummary summary;
};

/// One candidate per model on up to `workers` threads, then the summary.
/// When `store` is set every candidate and the summary are appended before
/// returning.
EnsembleResult run_ensemble(const corpus::Problem& p, const std::vector<modelgw::ModelSpec>& models,
                            const contextkb::ContextPack* ctx, const modelgw::ModelSpec& summarizer,
                            modelgw::Gateway& gateway, leanrun::Validator& validator, hub::Store* store,
                            const Options& options = {}, std::size_t workers = 4);

}  // namespace proofforge::formalize
