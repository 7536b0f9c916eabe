#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "proofforge/lean_lexer.hpp"

namespace proofforge::leanrun {

enum class Status { success, math_error, system_error, timeout };
enum class Severity { error, warning, info };
enum class DiagClass { unknown_identifier, type_mismatch, syntax, import_missing, sorry_usage, other };

std::string_view to_string(Status s);
std::string_view to_string(Severity s);
std::string_view to_string(DiagClass k);
Status parse_status(std::string_view s);

struct Diagnostic {
  Severity severity = Severity::error;
  std::string file;
  int line = 1;
  int col = 0;
  std::string message;
  DiagClass klass = DiagClass::other;

  bool operator==(const Diagnostic&) const = default;
};

struct ValidationResult {
  Status status = Status::success;
  bool contains_sorry = false;
  std::vector<Diagnostic> diagnostics;
  std::string raw_log;
  double duration_s = 0;

  bool has_errors() const;
  bool operator==(const ValidationResult&) const = default;
};

nlohmann::json to_json(const Diagnostic& d);
Diagnostic diagnostic_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidationResult& r);
ValidationResult validation_from_json(const nlohmann::json& j);

struct Classified {
  Status status = Status::success;
  std::vector<Diagnostic> diagnostics;
};

/// Pure and total. Understands both `file:L:C: severity: msg` and
/// `severity: file:L:C: msg` records; unlocated lines before the first
/// record are folded into one klass=other diagnostic, later ones extend the
/// message of the record above them.
Classified classify_log(std::string_view raw_log);

DiagClass classify_message(std::string_view message);
bool is_infrastructure_failure(std::string_view raw_log);

/// Error diagnostics only, ordered by (line, col), one per line as
/// "line L, col C: message". More than `limit` errors adds "+N more".
std::string format_feedback(const std::vector<Diagnostic>& diags, std::size_t limit = 20);

enum class Backend { real, fake };

struct Config {
  Backend backend = Backend::fake;
  std::filesystem::path root;  // prebuilt Lake project (real backend)
  std::chrono::seconds timeout{300};
  std::size_t pool_size = 0;  // 0 = half the cores, at least 1
  std::vector<std::string> lake_command = {"lake", "env", "lean"};
  std::optional<std::filesystem::path> fixture;  // fake backend table
};

/// Keys: root, timeout_s, pool_size, backend ("real"|"fake"), fixture,
/// lake_command. Relative paths resolve against base_dir.
Config config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

class Validator {
 public:
  virtual ~Validator() = default;
  /// Never throws for candidate problems; environment failures come back as
  /// status system_error.
  virtual ValidationResult validate(std::string_view code) = 0;
};

/// Bounded slot pool; blocks when all slots are taken.
class SlotPool {
 public:
  explicit SlotPool(std::size_t slots);
  void acquire();
  void release();
  std::size_t size() const { return slots_; }
  std::size_t peak() const;

 private:
  std::size_t slots_;
  std::size_t in_use_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

/// Compiles each candidate as `<root>/.proofforge_scratch/<unique>/Candidate.lean`
/// with `lake env lean`, then deletes the scratch directory.
class LakeValidator : public Validator {
 public:
  explicit LakeValidator(Config cfg);
  ValidationResult validate(std::string_view code) override;
  SlotPool& pool() { return pool_; }

 private:
  std::filesystem::path make_scratch_dir();

  Config cfg_;
  SlotPool pool_;
};

/// Table-driven stand-in for the toolchain. Fixture JSON is a list of
/// {"match": substring, "log": text, "times"?: n, "timeout"?: bool}; the first
/// rule whose substring occurs in the code (and has uses left) supplies the
/// log. No match means a clean compile.
class FakeValidator : public Validator {
 public:
  struct Rule {
    std::string match;
    std::string log;
    int times = -1;  // -1 = unlimited
    bool timeout = false;
  };

  FakeValidator() = default;
  explicit FakeValidator(std::vector<Rule> rules);
  static std::shared_ptr<FakeValidator> from_json(const nlohmann::json& fixture);
  static std::shared_ptr<FakeValidator> from_file(const std::filesystem::path& path);

  void add_rule(Rule rule);
  ValidationResult validate(std::string_view code) override;

  std::vector<std::string> seen() const;
  std::size_t call_count() const;

 private:
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::vector<std::string> seen_;
};

std::shared_ptr<Validator> make_validator(const Config& cfg);

/// Builds the final result from a raw log: classification plus the sorry
/// flag (log warning or a sorry token in the source).
ValidationResult result_from_log(std::string_view code, std::string raw_log, double duration_s);

}  // namespace proofforge::leanrun
