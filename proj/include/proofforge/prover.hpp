#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "proofforge/leanrun.hpp"
#include "proofforge/modelgw.hpp"

namespace proofforge::prover {

struct ProofTask {
  std::string problem_id;
  std::string theorem_code;  // statement whose proof is a single `sorry`
  std::string source_bench;

  bool operator==(const ProofTask&) const = default;
};

/// Throws Error(invalid_argument) unless the code has exactly one `sorry`.
void check_task(const ProofTask& task);
ProofTask task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProofTask& t);
std::vector<ProofTask> load_tasks(const std::filesystem::path& path);

enum class Mode { single, multi };
enum class Guard { ok, tampered, no_code };
enum class Outcome { proved, failed, gave_up };

std::string_view to_string(Mode m);
std::string_view to_string(Guard g);
std::string_view to_string(Outcome o);

struct Turn {
  std::string prompt_digest;  // sha256 of the prompt sent this turn
  std::string response;
  std::optional<std::string> code;
  std::optional<leanrun::ValidationResult> validation;
  Guard guard = Guard::ok;
  std::string note;  // guard reason or other remarks

  bool operator==(const Turn&) const = default;
};

struct ProofAttempt {
  std::string task_id;
  std::string model;
  Mode mode = Mode::single;
  std::vector<Turn> turns;
  Outcome outcome = Outcome::failed;
  int turns_used = 0;
  std::string error;  // set when the run stopped on a model or toolchain failure
  modelgw::Transcript transcript;

  bool operator==(const ProofAttempt&) const = default;
};

nlohmann::json to_json(const Turn& t);
nlohmann::json to_json(const ProofAttempt& a);
ProofAttempt attempt_from_json(const nlohmann::json& j);

struct GuardVerdict {
  Guard verdict = Guard::ok;
  std::string reason;
};

/// Lexical check that `submitted` keeps everything of `original` up to its
/// proof delimiter, changing only header lines (import/open/set_option) and
/// the proof, and adds no escape hatches (sorry, axiom, native_decide, ...).
GuardVerdict check_statement_preserved(std::string_view original, std::string_view submitted);

/// Code from the <output> section (a fence inside it is unwrapped), else the
/// last fenced block. nullopt when there is none or it holds only comments.
std::optional<std::string> extract_proof_code(std::string_view response);

struct ProverOptions {
  int system_retries = 2;
};

ProofAttempt prove_single_turn(const ProofTask& task, const modelgw::ModelSpec& spec,
                               modelgw::Gateway& gateway, leanrun::Validator& validator,
                               const ProverOptions& options = {});

ProofAttempt prove_multi_turn(const ProofTask& task, const modelgw::ModelSpec& spec,
                              modelgw::Gateway& gateway, leanrun::Validator& validator,
                              int max_turns = 10, const ProverOptions& options = {});

struct PassAt1 {
  int solved = 0;
  int total = 0;
  double rate = 0;

  std::string fraction() const;  // "36/312"
  std::string percent() const;   // "11.5%"
};

/// One attempt per task; a repeated task_id throws Error(invalid_argument).
PassAt1 pass_at_1(const std::vector<ProofAttempt>& attempts);

}  // namespace proofforge::prover
