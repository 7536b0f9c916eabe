#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace proofforge::modelgw {

enum class Provider { http_openai_style, http_anthropic_style, scripted };

std::string_view to_string(Provider p);
Provider parse_provider(std::string_view s);

struct ModelSpec {
  std::string name;
  Provider provider = Provider::scripted;
  std::optional<std::string> endpoint;
  /// Passed through to the provider request body untouched. A "model" key
  /// overrides the wire model name (useful when `name` is a display label).
  nlohmann::json params = nlohmann::json::object();
  std::chrono::seconds timeout{600};
  int max_retries = 2;
  /// 0 disables rate limiting.
  double requests_per_minute = 0;
};

/// Throws Error(invalid_argument) when the spec breaks its invariants.
void validate(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpec& spec);

enum class Role { system, user, assistant };
std::string_view to_string(Role r);

struct Message {
  Role role;
  std::string content;
  bool operator==(const Message&) const = default;
};

struct Transcript {
  std::vector<Message> messages;

  Transcript& system(std::string content);
  Transcript& user(std::string content);
  Transcript& assistant(std::string content);

  /// Optional leading system message, then strictly alternating
  /// user/assistant starting with user.
  bool well_formed() const;
  bool ends_with_user() const;

  bool operator==(const Transcript&) const = default;
};

nlohmann::json transcript_to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns the assistant text. Throws Error(transport) for failures worth
  /// retrying and any other Error kind for permanent ones.
  virtual std::string send(const ModelSpec& spec, const Transcript& t) = 0;
};

/// Deterministic replay backend. Each model name owns an ordered queue of
/// responses; a queue entry may also be an injected transport failure.
///
/// Fixture JSON: {"model-name": ["text", {"transport_error": "msg"}, ...]}
class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend() = default;
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& fixture);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  void enqueue(const std::string& model, std::string response);
  void enqueue_failure(const std::string& model, std::string message);

  std::string send(const ModelSpec& spec, const Transcript& t) override;

  /// Transcripts received for a model, in call order (failures included).
  std::vector<Transcript> calls(const std::string& model) const;
  std::size_t call_count(const std::string& model) const;
  std::size_t remaining(const std::string& model) const;

 private:
  struct Entry {
    std::string text;
    bool transport_failure = false;
  };
  mutable std::mutex mu_;
  std::map<std::string, std::deque<Entry>> queues_;
  std::map<std::string, std::vector<Transcript>> calls_;
};

/// Real provider over HTTP(S). Two wire dialects are supported:
/// openai-style chat completions and anthropic-style messages.
/// API keys come from PROOFFORGE_API_KEY_OPENAI / PROOFFORGE_API_KEY_ANTHROPIC.
class HttpBackend : public ChatBackend {
 public:
  std::string send(const ModelSpec& spec, const Transcript& t) override;

  static nlohmann::json build_request(const ModelSpec& spec, const Transcript& t);
  static std::string parse_response(Provider provider, const nlohmann::json& body);
  static std::string api_key_env_var(Provider provider);
};

struct CallRecord {
  std::string model;
  int attempt = 1;  // 1-based attempt within one complete() call
  bool ok = false;
  std::string error;
};

/// Delay before retry number `retry` (1-based): 1s, 2s, 4s, ... capped at 30s.
std::chrono::milliseconds backoff_delay(int retry);

/// Routes completion requests to the backend for the spec's provider and
/// applies retries, backoff and per-model rate limiting. Safe for
/// concurrent use.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway();

  void set_backend(Provider provider, std::shared_ptr<ChatBackend> backend);
  /// Replaces the real sleep used for backoff and rate limiting (tests).
  void set_sleeper(Sleeper sleeper);

  /// Pre: transcript well formed and ending with a user message.
  std::string complete(const ModelSpec& spec, const Transcript& t);

  std::vector<CallRecord> call_log() const;
  std::size_t call_count(const std::string& model) const;

 private:
  void throttle(const ModelSpec& spec);

  mutable std::mutex mu_;
  std::map<Provider, std::shared_ptr<ChatBackend>> backends_;
  Sleeper sleeper_;
  std::vector<CallRecord> log_;
  std::map<std::string, std::chrono::steady_clock::time_point> next_slot_;
};

// ---------------------------------------------------------------------------
// Prompt templates

enum class PromptId {
  kb_agent_system,
  kb_agent_user,
  formalize_initial,
  formalize_refine,
  atp_single,
  atp_multi_initial,
  atp_multi_feedback,
  summary,
  category_label,
};

std::string_view to_string(PromptId id);
std::string_view template_body(PromptId id);

/// Placeholder names in order of first appearance.
std::vector<std::string> placeholders(std::string_view body);

using Vars = std::map<std::string, std::string>;

/// Single-pass substitution of {name} placeholders. Substituted values are
/// never rescanned. Throws Error(missing_placeholder) naming the first
/// placeholder without a value.
std::string render_template(std::string_view body, const Vars& vars);
std::string render_prompt(PromptId id, const Vars& vars);

/// Optional prompt fragments spliced into formalize_initial.
extern const std::string_view kSolutionSection;       // {solution}
extern const std::string_view kDocumentationSection;  // {category}, {documentation}
/// Appended to atp_multi_feedback on the final turn.
extern const std::string_view kLastTurnReminder;

// ---------------------------------------------------------------------------
// Response parsing

/// Contents of the last `<tag>...</tag>` section, if any. An unterminated
/// final section runs to the end of the text.
std::optional<std::string> tagged_section(std::string_view text, std::string_view tag);

/// Contents of the last fenced code block. Blocks tagged lean/lean4 win over
/// untagged ones. Returns nullopt when there is no fence at all.
std::optional<std::string> last_fenced_block(std::string_view text);

/// The Lean code of a model response: the last fenced lean block, searched
/// inside <answer>/<output> first. Whitespace-trimmed.
/// Throws Error(extraction) carrying the raw response.
std::string extract_code_block(std::string_view response);

}  // namespace proofforge::modelgw
