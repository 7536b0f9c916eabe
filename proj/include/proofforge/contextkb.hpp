#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "proofforge/corpus.hpp"
#include "proofforge/modelgw.hpp"

namespace proofforge::contextkb {

using corpus::Category;
using corpus::Problem;

struct ContextPack {
  Category category = Category::Geometry;
  std::string body;
  std::vector<std::string> manifest;  // repo-relative paths the agent consulted
  std::string checksum;               // sha256 of body
  std::string built_at;

  bool operator==(const ContextPack&) const = default;
};

ContextPack make_pack(Category cat, std::string body, std::vector<std::string> manifest = {});
/// Sidecar JSON: {category, checksum, manifest, built_at}.
nlohmann::json sidecar_json(const ContextPack& pack);

enum class Tool { run_bash, final_submit };
std::string_view to_string(Tool t);

struct ToolCall {
  Tool tool = Tool::run_bash;
  std::string argument;
  std::string observation;

  bool operator==(const ToolCall&) const = default;
};

nlohmann::json to_json(const ToolCall& c);
ToolCall tool_call_from_json(const nlohmann::json& j);

/// Deterministic seeded sample of ceil(ratio * n) problems of `cat`,
/// returned in corpus order. Throws Error(invalid_argument) unless
/// 0 < ratio <= 1.
std::vector<Problem> sample_for_category(const std::vector<Problem>& problems, Category cat,
                                         double ratio, std::uint64_t seed);

/// The first <run_bash> or <final_submit> element of a response.
std::optional<ToolCall> parse_tool_call(std::string_view response);

/// Canonical text of a call as the assistant turn of a transcript.
std::string render_tool_call(const ToolCall& call);
std::string render_observation(const ToolCall& call);

/// Returns a rejection reason when the command could modify anything
/// outside `scratch`, or nullopt when it may run. Relative paths resolve
/// against `cwd`.
std::optional<std::string> check_command(std::string_view command, const std::filesystem::path& cwd,
                                         const std::filesystem::path& scratch);

struct AgentOptions {
  std::size_t budget = 60;  // model calls
  std::size_t observation_cap = 16 * 1024;
  std::chrono::seconds command_timeout{60};
  std::filesystem::path scratch_dir;  // empty = <temp>/proofforge-notes-<category>
};

struct AgentRun {
  ContextPack pack;
  std::vector<ToolCall> calls;
  modelgw::Transcript transcript;
};

/// Formats the sampled problems for the agent's user prompt.
std::string format_examples(const std::vector<Problem>& samples);

/// Opening system and user messages of an agent episode.
modelgw::Transcript agent_preamble(Category cat, const std::vector<Problem>& samples,
                                   const std::filesystem::path& scratch);

/// Rebuilds the transcript of an episode from its stored tool calls.
modelgw::Transcript replay_transcript(const modelgw::Transcript& preamble,
                                      const std::vector<ToolCall>& calls);

/// Runs the documentation agent until final_submit. Throws
/// Error(incomplete_context) with the transcript JSON as detail when the
/// budget runs out, Error(protocol) on a second non-tool-call response.
AgentRun build_context(Category cat, const std::vector<Problem>& samples, modelgw::Gateway& gateway,
                       const modelgw::ModelSpec& agent_model, const std::filesystem::path& repo_root,
                       const AgentOptions& options = {});

/// Packs on disk: <dir>/<Category>.md plus <dir>/<Category>.json.
class ContextStore {
 public:
  explicit ContextStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  void put(const ContextPack& pack);
  bool has(Category cat) const;
  /// Verifies the checksum on every read.
  ContextPack get(Category cat) const;
  /// Loads a hand-written body. The category defaults to the file stem.
  ContextPack import_file(const std::filesystem::path& file, std::optional<Category> cat = std::nullopt);

 private:
  std::filesystem::path body_path(Category cat) const;
  std::filesystem::path sidecar_path(Category cat) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

ContextPack get_context(Category cat, const ContextStore& store);

}  // namespace proofforge::contextkb
