#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace proofforge {

enum class ErrorKind {
  invalid_argument,
  malformed_record,
  duplicate_id,
  unrecognized_label,
  transport,
  provider,
  fixture_underrun,
  missing_placeholder,
  extraction,
  protocol,
  incomplete_context,
  not_built,
  corruption,
  parse,
  schema,
  io,
  not_found,
  construction,
  startup,
  conflict,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure surfaced by the library. The kind is
/// what callers branch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string detail = {})
      : std::runtime_error(message), kind_(kind), detail_(std::move(detail)) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Attached context: the raw model response for extraction failures, the
  /// partial agent transcript (JSON) for incomplete contexts, and so on.
  const std::string& detail() const noexcept { return detail_; }

  /// Only transport failures are worth retrying.
  bool retryable() const noexcept { return kind_ == ErrorKind::transport; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace proofforge
