#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace proofforge {
namespace modelgw {
class Gateway;
struct ModelSpec;
}  // namespace modelgw

namespace corpus {

enum class Category { Geometry, Algebra, SetTheoryCombinatorics, NumberTheory };

inline constexpr std::array<Category, 4> kAllCategories = {
    Category::Geometry, Category::Algebra, Category::SetTheoryCombinatorics,
    Category::NumberTheory};

/// Canonical identifier, e.g. "SetTheoryCombinatorics".
std::string_view to_string(Category c);
/// Human wording used in prompts, e.g. "Set Theory & Combinatorics".
std::string_view display_name(Category c);

/// Case- and punctuation-insensitive mapping onto the four categories.
/// Accepts canonical ids, display names and a few common spellings.
std::optional<Category> parse_category(std::string_view text);

enum class Kind { prove, solve };
std::string_view to_string(Kind k);

struct Problem {
  std::string id;
  std::string source;
  std::string statement_nl;
  Kind kind = Kind::prove;
  std::optional<std::string> answer;
  std::optional<Category> category;
  std::optional<std::string> informal_proof;
  /// Set by frame_solve_as_prove; the answer is then kept as prompt context
  /// even though kind is prove. Never read from or written to corpus files.
  bool reframed_from_solve = false;

  bool operator==(const Problem&) const = default;
};

/// Throws Error(malformed_record) if the kind/answer invariant is broken.
void check_invariants(const Problem& p);

/// One corpus record. Unknown keys are rejected.
Problem problem_from_json(const nlohmann::json& j);
nlohmann::json problem_to_json(const Problem& p);

/// Parse a JSONL corpus. Whitespace-only lines are skipped; every other
/// line must hold exactly one record. Errors cite 1-based line numbers.
std::vector<Problem> parse_corpus(std::istream& in);
std::vector<Problem> ingest_corpus(const std::filesystem::path& path);

std::string serialize_corpus(const std::vector<Problem>& problems);

/// Asks the model for a category and maps the reply onto the enum. Stores
/// the label on the problem and returns it.
Category label_category(Problem& p, modelgw::Gateway& gateway,
                        const modelgw::ModelSpec& spec);

/// Labels every problem that has no human-provided category yet.
void label_all(std::vector<Problem>& problems, modelgw::Gateway& gateway,
               const modelgw::ModelSpec& spec);

/// Solve-type problems become prove-type problems whose statement asks to
/// prove the given answer. Prove-type problems come back unchanged.
Problem frame_solve_as_prove(const Problem& p);

}  // namespace corpus
}  // namespace proofforge
