#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "proofforge/corpus.hpp"
#include "proofforge/leanrun.hpp"

namespace httplib {
class Server;
}

namespace proofforge::hub {

enum class EventKind {
  candidate_added,
  summary_added,
  attempt_added,
  annotation_saved,
  annotation_verified,
  compile_requested,
  compile_completed,
};

std::string_view to_string(EventKind k);
EventKind parse_event_kind(std::string_view s);

struct EventRecord {
  std::int64_t seq = 0;
  EventKind kind = EventKind::candidate_added;
  nlohmann::json payload;
  std::string at;

  bool operator==(const EventRecord&) const = default;
};

nlohmann::json to_json(const EventRecord& e);
EventRecord event_from_json(const nlohmann::json& j);

/// Structural check of a payload for its kind. Throws Error(schema).
void check_schema(EventKind kind, const nlohmann::json& payload);

enum class AnnotationStatus { draft, verified_once, verified_twice };
std::string_view to_string(AnnotationStatus s);
AnnotationStatus parse_annotation_status(std::string_view s);

struct Annotation {
  std::int64_t id = 0;  // seq of its annotation_saved event
  std::string problem_id;
  std::string final_code;
  std::optional<nlohmann::json> base_candidate;  // {model, iteration}
  std::string editor;
  std::vector<std::string> verifiers;  // distinct, in first-verification order
  std::int64_t event_seq = 0;          // seq of the latest event touching it
  std::string created_at;

  AnnotationStatus status() const;
  bool operator==(const Annotation&) const = default;
};

nlohmann::json to_json(const Annotation& a);

struct CompileJob {
  std::int64_t request_id = 0;
  std::string problem_id;
  std::string code;
  std::optional<nlohmann::json> result;  // ValidationResult JSON once done

  bool operator==(const CompileJob&) const = default;
};

/// Everything derived from the event log.
struct Views {
  std::int64_t last_seq = 0;
  std::map<std::string, std::vector<nlohmann::json>> candidates;  // by problem, append order
  std::map<std::string, nlohmann::json> summaries;
  std::vector<nlohmann::json> attempts;
  std::map<std::int64_t, Annotation> annotations;
  std::map<std::int64_t, CompileJob> compiles;

  /// Pure state transition; throws Error on rule violations so a rejected
  /// event is never written.
  void apply(const EventRecord& e);
  void check(EventKind kind, const nlohmann::json& payload) const;

  nlohmann::json to_json() const;
  static Views from_json(const nlohmann::json& j);
  bool operator==(const Views&) const = default;
};

struct StoreOptions {
  /// Write a snapshot every N appended events (0 disables snapshots).
  std::size_t snapshot_every = 200;
};

/// Append-only JSONL event log with a periodic snapshot. Layout:
///   <dir>/events.jsonl   one EventRecord per line
///   <dir>/snapshot.json  {"seq": n, "views": {...}}
///   <dir>/corpus.jsonl   problems served by the API
/// One writer at a time; readers see a consistent copy of the views.
class Store {
 public:
  explicit Store(std::filesystem::path dir, StoreOptions options = {});
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

  /// Validates, fsyncs and applies. Returns the assigned seq.
  std::int64_t append(EventKind kind, nlohmann::json payload);

  Views views() const;
  std::vector<EventRecord> events() const;

  /// Views rebuilt from an empty state by replaying events.jsonl.
  Views replay_from_log() const;

  void write_snapshot();

  void set_problems(const std::vector<corpus::Problem>& problems);
  std::vector<corpus::Problem> problems() const;

  template <class F>
  auto read(F&& f) const {
    std::shared_lock lock(view_mu_);
    return f(views_);
  }

 private:
  std::vector<EventRecord> load_log(bool repair);

  std::filesystem::path dir_;
  StoreOptions options_;
  int fd_ = -1;
  std::mutex write_mu_;
  mutable std::shared_mutex view_mu_;
  Views views_;
  std::size_t since_snapshot_ = 0;
  std::vector<corpus::Problem> problems_;
};

/// Validates compile requests on background workers and records results
/// as compile_completed events.
class CompileWorker {
 public:
  CompileWorker(Store& store, std::shared_ptr<leanrun::Validator> validator, std::size_t threads = 1);
  ~CompileWorker();

  /// Appends compile_requested and queues it. Returns the request id.
  std::int64_t submit(const std::string& problem_id, const std::string& code);
  /// Re-queues requests that have no result yet (after a restart).
  std::size_t resume_pending();
  /// Blocks until the queue is empty and no job is running.
  void drain();

 private:
  void loop();

  Store& store_;
  std::shared_ptr<leanrun::Validator> validator_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<CompileJob> queue_;
  std::size_t running_ = 0;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t compile_threads = 1;
};

/// HTTP JSON API over a Store. Reads never append; every POST appends
/// exactly the events it documents.
class Server {
 public:
  Server(Store& store, std::shared_ptr<leanrun::Validator> validator, ServerConfig config = {});
  ~Server();

  /// Binds and starts serving on a background thread. Returns the bound
  /// port. Throws Error(startup) when the port cannot be bound.
  int start();
  /// Blocks serving on the calling thread.
  void run();
  void stop();
  CompileWorker& compiler() { return *worker_; }

 private:
  void install_routes();
  int bind();

  Store& store_;
  ServerConfig config_;
  std::unique_ptr<CompileWorker> worker_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = 0;
};

/// Problem summaries for GET /problems.
nlohmann::json problem_list(const Store& store);

/// Verified annotations as JSONL, oldest first.
std::string export_annotations(const Store& store,
                               AnnotationStatus min_status = AnnotationStatus::verified_twice);

}  // namespace proofforge::hub
