#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "proofforge/formalize.hpp"
#include "proofforge/prover.hpp"

namespace proofforge::evalmetrics {

struct OpTree {
  std::string label;
  std::vector<OpTree> children;

  OpTree() = default;
  explicit OpTree(std::string l, std::vector<OpTree> c = {}) : label(std::move(l)), children(std::move(c)) {}

  std::size_t size() const;
  /// "(label child ...)", leaves print bare.
  std::string to_sexpr() const;
  bool operator==(const OpTree&) const = default;
};

/// Reads the s-expression form produced by to_sexpr.
OpTree parse_sexpr(std::string_view text);

/// Operator tree of the first theorem/lemma/example declaration: its
/// binders become nested ∀ nodes around the statement. Bound variables are
/// renamed to positional placeholders _0, _1, ... in binding order.
/// Throws Error(parse) on unbalanced delimiters, citing line and column.
OpTree parse_optree(std::string_view theorem_code);

/// Ordered tree edit distance with unit costs (Zhang-Shasha).
int ted(const OpTree& a, const OpTree& b);

enum class Normalization { sum, max };

struct GtedResult {
  int ted_cost = 0;
  std::size_t size_a = 0;
  std::size_t size_b = 0;
  double similarity = 1.0;
};

/// similarity = 1 - ted / (|A| + |B|) by default, or ted / max(|A|, |B|).
GtedResult gted_similarity(const OpTree& a, const OpTree& b, Normalization norm = Normalization::sum);

struct BeqResult {
  bool forward_proved = false;
  bool backward_proved = false;
  bool pass = false;
  bool fast_path = false;
  std::optional<prover::ProofAttempt> forward;
  std::optional<prover::ProofAttempt> backward;
};

/// Lean file whose goal is `goal`'s statement with `hyp`'s statement as a
/// named hypothesis. Throws Error(construction) naming the theorem when the
/// two files cannot be combined.
std::string beq_goal_file(std::string_view hyp, std::string_view goal, std::string_view name);

BeqResult beq_check(std::string_view thm_a, std::string_view thm_b, const modelgw::ModelSpec& prover_spec,
                    modelgw::Gateway& gateway, leanrun::Validator& validator, int budget = 10);

/// One candidate compared against its gold statement.
struct ComparisonRecord {
  std::string model;
  std::string problem_id;
  formalize::FinalStatus final_status = formalize::FinalStatus::invalid;
  std::optional<double> similarity;  // nullopt: no gold statement
  std::optional<bool> beq_pass;      // nullopt: not checked

  bool operator==(const ComparisonRecord&) const = default;
};

nlohmann::json to_json(const ComparisonRecord& r);
ComparisonRecord comparison_from_json(const nlohmann::json& j);
std::vector<ComparisonRecord> load_comparisons(const std::filesystem::path& path);
void save_comparisons(const std::filesystem::path& path, const std::vector<ComparisonRecord>& records);

/// Gold JSONL {"problem_id", "theorem_code"}.
std::map<std::string, std::string> load_gold(const std::filesystem::path& path);

/// Compares every candidate with its gold statement. Unparseable candidate
/// statements score 0.
std::vector<ComparisonRecord> compare_candidates(const std::vector<formalize::Candidate>& candidates,
                                                 const std::map<std::string, OpTree>& gold,
                                                 const std::map<std::pair<std::string, std::string>, bool>& beq = {},
                                                 Normalization norm = Normalization::sum);

struct MetricsRow {
  std::string model;
  int beq_count = 0;
  double gted_mean = 0;  // non-compiling candidates score 0
  int gted_above_threshold = 0;
  int compile_success = 0;
  int denominator = 0;
  double gted_mean_compiled = 0;
  int missing_gold = 0;
  std::vector<double> heatmap;  // fraction with similarity >= each threshold

  bool operator==(const MetricsRow&) const = default;
};

struct AggregateOptions {
  double threshold = 0.9;  // strict >, except 1.0 which means exact match
  std::vector<double> heatmap_thresholds;
  int denominator = 0;  // 0 = records per model
};

/// Rows in order of first appearance of each model.
std::vector<MetricsRow> aggregate_rows(const std::vector<ComparisonRecord>& records,
                                       const AggregateOptions& options = {});

enum class ReportFormat { csv, json, markdown };
ReportFormat parse_report_format(std::string_view s);

std::string emit_report(const std::vector<MetricsRow>& rows, ReportFormat format,
                        const std::vector<double>& heatmap_thresholds = {}, double threshold = 0.9);
void write_report(const std::filesystem::path& path, const std::vector<MetricsRow>& rows, ReportFormat format,
                  const std::vector<double>& heatmap_thresholds = {}, double threshold = 0.9);

/// Compile rate per model with and without documentation and feedback.
std::string emit_ablation(const std::vector<MetricsRow>& zero_shot, const std::vector<MetricsRow>& refined,
                          ReportFormat format);

/// Fraction of problems where at least one model produced a valid candidate.
double best_of_ensemble_rate(const std::vector<ComparisonRecord>& records);

}  // namespace proofforge::evalmetrics
