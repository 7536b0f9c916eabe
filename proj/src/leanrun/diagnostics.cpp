#include <algorithm>
#include <regex>

#include "proofforge/error.hpp"
#include "proofforge/leanrun.hpp"
#include "proofforge/util.hpp"

namespace proofforge::leanrun {

using nlohmann::json;

std::string_view to_string(Status s) {
  switch (s) {
    case Status::success: return "success";
    case Status::math_error: return "math_error";
    case Status::system_error: return "system_error";
    case Status::timeout: return "timeout";
  }
  return "";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::error: return "error";
    case Severity::warning: return "warning";
    case Severity::info: return "info";
  }
  return "";
}

std::string_view to_string(DiagClass k) {
  switch (k) {
    case DiagClass::unknown_identifier: return "unknown_identifier";
    case DiagClass::type_mismatch: return "type_mismatch";
    case DiagClass::syntax: return "syntax";
    case DiagClass::import_missing: return "import_missing";
    case DiagClass::sorry_usage: return "sorry_usage";
    case DiagClass::other: return "other";
  }
  return "";
}

Status parse_status(std::string_view s) {
  for (auto st : {Status::success, Status::math_error, Status::system_error, Status::timeout}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorKind::schema, "unknown validation status '" + std::string(s) + "'");
}

namespace {

Severity parse_severity(std::string_view s) {
  if (s == "error") return Severity::error;
  if (s == "warning") return Severity::warning;
  if (s == "info" || s == "information") return Severity::info;
  throw Error(ErrorKind::schema, "unknown severity '" + std::string(s) + "'");
}

DiagClass parse_class(std::string_view s) {
  for (auto k : {DiagClass::unknown_identifier, DiagClass::type_mismatch, DiagClass::syntax,
                 DiagClass::import_missing, DiagClass::sorry_usage, DiagClass::other}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::schema, "unknown diagnostic class '" + std::string(s) + "'");
}

bool contains(std::string_view hay, std::string_view needle) {
  return hay.find(needle) != std::string_view::npos;
}

}  // namespace

bool ValidationResult::has_errors() const {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

json to_json(const Diagnostic& d) {
  return {{"severity", to_string(d.severity)}, {"file", d.file},       {"line", d.line},
          {"col", d.col},                      {"message", d.message}, {"klass", to_string(d.klass)}};
}

Diagnostic diagnostic_from_json(const json& j) {
  Diagnostic d;
  d.severity = parse_severity(j.at("severity").get<std::string>());
  d.file = j.value("file", "");
  d.line = j.at("line").get<int>();
  d.col = j.at("col").get<int>();
  d.message = j.at("message").get<std::string>();
  d.klass = parse_class(j.value("klass", "other"));
  return d;
}

json to_json(const ValidationResult& r) {
  json diags = json::array();
  for (const auto& d : r.diagnostics) diags.push_back(to_json(d));
  return {{"status", to_string(r.status)}, {"contains_sorry", r.contains_sorry},
          {"diagnostics", diags},          {"raw_log", r.raw_log},
          {"duration_s", r.duration_s}};
}

ValidationResult validation_from_json(const json& j) {
  ValidationResult r;
  r.status = parse_status(j.at("status").get<std::string>());
  r.contains_sorry = j.at("contains_sorry").get<bool>();
  for (const auto& d : j.at("diagnostics")) r.diagnostics.push_back(diagnostic_from_json(d));
  r.raw_log = j.value("raw_log", "");
  r.duration_s = j.value("duration_s", 0.0);
  return r;
}

DiagClass classify_message(std::string_view message) {
  std::string m = util::to_lower_ascii(message);
  if (contains(m, "declaration uses 'sorry'")) return DiagClass::sorry_usage;
  if (contains(m, "unknown module prefix") || contains(m, "unknown package") ||
      contains(m, "file not found") || contains(m, "object file") ||
      contains(m, "unknown import")) {
    return DiagClass::import_missing;
  }
  if (contains(m, "unknown identifier") || contains(m, "unknown constant")) {
    return DiagClass::unknown_identifier;
  }
  if (contains(m, "type mismatch")) return DiagClass::type_mismatch;
  if (contains(m, "unexpected token") || contains(m, "unterminated") ||
      util::starts_with(m, "expected") || contains(m, "unexpected end of input")) {
    return DiagClass::syntax;
  }
  return DiagClass::other;
}

bool is_infrastructure_failure(std::string_view raw_log) {
  static const std::vector<std::string_view> kPatterns = {
      "no such file or directory: lake",
      "no such file or directory: lean",
      "command not found",
      "out of memory",
      "std::bad_alloc",
      "No space left on device",
      "unknown package 'Mathlib'",
      "elan: ",
      "toolchain not installed",
      "lake: not found",
  };
  for (auto p : kPatterns) {
    if (contains(raw_log, p)) return true;
  }
  // a bare "Killed" line is the OOM killer talking
  for (const auto& line : util::split_lines(raw_log)) {
    if (util::trim(line) == "Killed") return true;
  }
  return false;
}

Classified classify_log(std::string_view raw_log) {
  static const std::regex kFileFirst(
      R"(^(.+?):(\d+):(\d+):\s*(error|warning|info|information):\s?(.*)$)");
  static const std::regex kSeverityFirst(
      R"(^(error|warning|info|information):\s*(.+?):(\d+):(\d+):\s?(.*)$)");

  Classified out;
  std::vector<std::string> preamble;
  bool preamble_error = false;
  std::optional<Diagnostic> current;

  auto flush = [&] {
    if (current) {
      current->message = util::trim(current->message);
      current->klass = classify_message(current->message);
      out.diagnostics.push_back(std::move(*current));
      current.reset();
    }
  };

  for (const auto& line : util::split_lines(raw_log)) {
    std::smatch m;
    if (std::regex_match(line, m, kFileFirst)) {
      flush();
      current = Diagnostic{parse_severity(m[4].str()), m[1].str(), std::max(1, std::stoi(m[2].str())),
                           std::stoi(m[3].str()), m[5].str(), DiagClass::other};
    } else if (std::regex_match(line, m, kSeverityFirst)) {
      flush();
      current = Diagnostic{parse_severity(m[1].str()), m[2].str(), std::max(1, std::stoi(m[3].str())),
                           std::stoi(m[4].str()), m[5].str(), DiagClass::other};
    } else if (current) {
      current->message += "\n" + line;
    } else if (!util::trim(line).empty()) {
      preamble.push_back(line);
      if (util::starts_with(util::to_lower_ascii(util::trim(line)), "error")) preamble_error = true;
    }
  }
  flush();

  if (!preamble.empty()) {
    std::string msg = util::join(preamble, "\n");
    Diagnostic d{preamble_error ? Severity::error : Severity::info, "", 1, 0, msg, DiagClass::other};
    out.diagnostics.insert(out.diagnostics.begin(), std::move(d));
  }

  if (is_infrastructure_failure(raw_log)) {
    out.status = Status::system_error;
  } else if (std::any_of(out.diagnostics.begin(), out.diagnostics.end(),
                         [](const Diagnostic& d) { return d.severity == Severity::error; })) {
    out.status = Status::math_error;
  } else {
    out.status = Status::success;
  }
  return out;
}

std::string format_feedback(const std::vector<Diagnostic>& diags, std::size_t limit) {
  std::vector<const Diagnostic*> errors;
  for (const auto& d : diags) {
    if (d.severity == Severity::error) errors.push_back(&d);
  }
  std::stable_sort(errors.begin(), errors.end(), [](const Diagnostic* a, const Diagnostic* b) {
    return std::pair(a->line, a->col) < std::pair(b->line, b->col);
  });
  std::string out;
  std::size_t shown = std::min(limit, errors.size());
  for (std::size_t i = 0; i < shown; ++i) {
    if (!out.empty()) out += '\n';
    out += "line " + std::to_string(errors[i]->line) + ", col " + std::to_string(errors[i]->col) +
           ": " + errors[i]->message;
  }
  if (errors.size() > shown) {
    if (!out.empty()) out += '\n';
    out += "+" + std::to_string(errors.size() - shown) + " more";
  }
  return out;
}

ValidationResult result_from_log(std::string_view code, std::string raw_log, double duration_s) {
  auto c = classify_log(raw_log);
  ValidationResult r;
  r.status = c.status;
  r.diagnostics = std::move(c.diagnostics);
  r.raw_log = std::move(raw_log);
  r.duration_s = duration_s;
  r.contains_sorry = mentions_sorry(code) ||
                     std::any_of(r.diagnostics.begin(), r.diagnostics.end(), [](const Diagnostic& d) {
                       return d.klass == DiagClass::sorry_usage;
                     });
  return r;
}

}  // namespace proofforge::leanrun
