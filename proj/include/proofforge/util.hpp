#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proofforge::util {

/// Lower-case hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// UTC timestamp, ISO-8601 with second precision ("2025-01-31T12:00:00Z").
std::string now_iso8601();

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::string to_lower_ascii(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Truncate to at most max_bytes without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

std::string read_file(const std::filesystem::path& path);

/// Write via a temp file and rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

/// 64-bit FNV-1a; used where a stable, platform-independent hash is needed.
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);

struct ProcessResult {
  int exit_code = -1;  // -1 when killed by a signal or on timeout
  bool timed_out = false;
  std::string output;  // stdout and stderr interleaved
  std::chrono::milliseconds elapsed{0};
};

struct ProcessOptions {
  std::filesystem::path cwd;
  std::chrono::milliseconds timeout{std::chrono::seconds(300)};
  std::size_t output_cap = 16 * 1024 * 1024;
  std::vector<std::pair<std::string, std::string>> extra_env;
};

/// Run argv[0] (PATH lookup) with a wall-clock cap. The child gets its own
/// process group; on timeout the whole group is killed.
/// Throws Error(io) if the process cannot be spawned at all.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const ProcessOptions& options);

/// Resolve an executable against PATH (or accept an existing path).
std::optional<std::filesystem::path> find_executable(std::string_view name);

/// Run fn(i) for i in [0, n) on at most `workers` threads. Exceptions from
/// fn are rethrown (the first one) after all workers finish.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace proofforge::util
