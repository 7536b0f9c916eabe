#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "proofforge/error.hpp"
#include "proofforge/hub.hpp"
#include "proofforge/util.hpp"

namespace proofforge::hub {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr EventKind kKinds[] = {EventKind::candidate_added,    EventKind::summary_added,
                                EventKind::attempt_added,      EventKind::annotation_saved,
                                EventKind::annotation_verified, EventKind::compile_requested,
                                EventKind::compile_completed};

void require(const json& p, const char* key, json::value_t type, bool nonempty = false) {
  auto it = p.find(key);
  bool ok = it != p.end();
  if (ok) {
    if (type == json::value_t::number_integer) {
      ok = it->is_number_integer();
    } else {
      ok = it->type() == type;
    }
  }
  if (!ok) throw Error(ErrorKind::schema, std::string("payload field '") + key + "' missing or mistyped");
  if (nonempty && it->is_string() && util::trim(it->get<std::string>()).empty()) {
    throw Error(ErrorKind::schema, std::string("payload field '") + key + "' must not be empty");
  }
}

void require_one_of(const json& p, const char* key, std::initializer_list<std::string_view> values) {
  require(p, key, json::value_t::string);
  auto v = p[key].get<std::string>();
  for (auto allowed : values) {
    if (v == allowed) return;
  }
  throw Error(ErrorKind::schema, std::string("payload field '") + key + "' has unexpected value '" + v + "'");
}

constexpr auto S = json::value_t::string;
constexpr auto A = json::value_t::array;
constexpr auto O = json::value_t::object;
constexpr auto I = json::value_t::number_integer;

}  // namespace

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::candidate_added: return "candidate_added";
    case EventKind::summary_added: return "summary_added";
    case EventKind::attempt_added: return "attempt_added";
    case EventKind::annotation_saved: return "annotation_saved";
    case EventKind::annotation_verified: return "annotation_verified";
    case EventKind::compile_requested: return "compile_requested";
    case EventKind::compile_completed: return "compile_completed";
  }
  return "";
}

EventKind parse_event_kind(std::string_view s) {
  for (auto k : kKinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::schema, "unknown event kind '" + std::string(s) + "'");
}

json to_json(const EventRecord& e) {
  return {{"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload}, {"at", e.at}};
}

EventRecord event_from_json(const json& j) {
  EventRecord e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  e.payload = j.at("payload");
  e.at = j.value("at", "");
  return e;
}

void check_schema(EventKind kind, const json& p) {
  if (!p.is_object()) throw Error(ErrorKind::schema, "payload must be a JSON object");
  switch (kind) {
    case EventKind::candidate_added:
      require(p, "problem_id", S, true);
      require(p, "model", S, true);
      require(p, "iterations", A);
      require_one_of(p, "final_status", {"valid", "invalid", "aborted_system"});
      require(p, "final_code", S);
      break;
    case EventKind::summary_added:
      require(p, "problem_id", S, true);
      require(p, "ranking", A);
      require(p, "common_errors", S);
      require(p, "missing_conditions", S);
      require(p, "raw", S);
      break;
    case EventKind::attempt_added:
      require(p, "task_id", S, true);
      require(p, "model", S, true);
      require_one_of(p, "mode", {"single", "multi"});
      require(p, "turns", A);
      require_one_of(p, "outcome", {"proved", "failed", "gave_up"});
      require(p, "turns_used", I);
      break;
    case EventKind::annotation_saved:
      require(p, "problem_id", S, true);
      require(p, "final_code", S, true);
      require(p, "editor", S, true);
      if (p.contains("base_candidate") && !p["base_candidate"].is_null()) {
        const auto& b = p["base_candidate"];
        if (!b.is_object()) throw Error(ErrorKind::schema, "base_candidate must be an object");
        require(b, "model", S, true);
        require(b, "iteration", I);
      }
      break;
    case EventKind::annotation_verified:
      require(p, "annotation_id", I);
      require(p, "editor", S, true);
      break;
    case EventKind::compile_requested:
      require(p, "problem_id", S, true);
      require(p, "code", S);
      break;
    case EventKind::compile_completed:
      require(p, "request_id", I);
      require(p, "result", O);
      break;
  }
}

std::string_view to_string(AnnotationStatus s) {
  switch (s) {
    case AnnotationStatus::draft: return "draft";
    case AnnotationStatus::verified_once: return "verified_once";
    case AnnotationStatus::verified_twice: return "verified_twice";
  }
  return "";
}

AnnotationStatus parse_annotation_status(std::string_view s) {
  for (auto st : {AnnotationStatus::draft, AnnotationStatus::verified_once, AnnotationStatus::verified_twice}) {
    if (to_string(st) == s) return st;
  }
  throw Error(ErrorKind::invalid_argument, "unknown annotation status '" + std::string(s) + "'");
}

AnnotationStatus Annotation::status() const {
  if (verifiers.size() >= 2) return AnnotationStatus::verified_twice;
  if (verifiers.size() == 1) return AnnotationStatus::verified_once;
  return AnnotationStatus::draft;
}

json to_json(const Annotation& a) {
  json j = {{"id", a.id},
            {"problem_id", a.problem_id},
            {"final_code", a.final_code},
            {"base_candidate", a.base_candidate ? *a.base_candidate : json(nullptr)},
            {"editor", a.editor},
            {"status", to_string(a.status())},
            {"verifiers", a.verifiers},
            {"event_seq", a.event_seq},
            {"created_at", a.created_at}};
  return j;
}

void Views::check(EventKind kind, const json& p) const {
  check_schema(kind, p);
  switch (kind) {
    case EventKind::candidate_added: {
      auto it = candidates.find(p["problem_id"].get<std::string>());
      if (it != candidates.end()) {
        for (const auto& c : it->second) {
          if (c["model"] == p["model"]) {
            throw Error(ErrorKind::conflict, "candidate of model '" + p["model"].get<std::string>() +
                                                 "' for '" + p["problem_id"].get<std::string>() +
                                                 "' already exists; candidates are immutable");
          }
        }
      }
      break;
    }
    case EventKind::summary_added:
      if (summaries.count(p["problem_id"].get<std::string>())) {
        throw Error(ErrorKind::conflict, "summary for '" + p["problem_id"].get<std::string>() +
                                             "' already exists; summaries are immutable");
      }
      break;
    case EventKind::annotation_verified:
      if (!annotations.count(p["annotation_id"].get<std::int64_t>())) {
        throw Error(ErrorKind::not_found,
                    "no annotation with id " + std::to_string(p["annotation_id"].get<std::int64_t>()));
      }
      break;
    case EventKind::compile_completed: {
      auto it = compiles.find(p["request_id"].get<std::int64_t>());
      if (it == compiles.end()) {
        throw Error(ErrorKind::not_found,
                    "no compile request " + std::to_string(p["request_id"].get<std::int64_t>()));
      }
      if (it->second.result) throw Error(ErrorKind::conflict, "compile request already completed");
      break;
    }
    default:
      break;
  }
}

void Views::apply(const EventRecord& e) {
  if (e.seq != last_seq + 1) {
    throw Error(ErrorKind::corruption, "event seq " + std::to_string(e.seq) + " follows " +
                                           std::to_string(last_seq));
  }
  check(e.kind, e.payload);
  const auto& p = e.payload;
  switch (e.kind) {
    case EventKind::candidate_added:
      candidates[p["problem_id"].get<std::string>()].push_back(p);
      break;
    case EventKind::summary_added:
      summaries[p["problem_id"].get<std::string>()] = p;
      break;
    case EventKind::attempt_added:
      attempts.push_back(p);
      break;
    case EventKind::annotation_saved: {
      Annotation a;
      a.id = e.seq;
      a.problem_id = p["problem_id"].get<std::string>();
      a.final_code = p["final_code"].get<std::string>();
      if (p.contains("base_candidate") && !p["base_candidate"].is_null()) a.base_candidate = p["base_candidate"];
      a.editor = p["editor"].get<std::string>();
      a.event_seq = e.seq;
      a.created_at = e.at;
      annotations[a.id] = std::move(a);
      break;
    }
    case EventKind::annotation_verified: {
      auto& a = annotations.at(p["annotation_id"].get<std::int64_t>());
      auto editor = p["editor"].get<std::string>();
      if (std::find(a.verifiers.begin(), a.verifiers.end(), editor) == a.verifiers.end()) {
        a.verifiers.push_back(editor);
      }
      a.event_seq = e.seq;
      break;
    }
    case EventKind::compile_requested: {
      CompileJob job;
      job.request_id = e.seq;
      job.problem_id = p["problem_id"].get<std::string>();
      job.code = p["code"].get<std::string>();
      compiles[e.seq] = std::move(job);
      break;
    }
    case EventKind::compile_completed:
      compiles.at(p["request_id"].get<std::int64_t>()).result = p["result"];
      break;
  }
  last_seq = e.seq;
}

json Views::to_json() const {
  json ann = json::array();
  for (const auto& [id, a] : annotations) {
    json j = hub::to_json(a);
    ann.push_back(j);
  }
  json comp = json::array();
  for (const auto& [id, c] : compiles) {
    comp.push_back({{"request_id", c.request_id},
                    {"problem_id", c.problem_id},
                    {"code", c.code},
                    {"result", c.result ? *c.result : json(nullptr)}});
  }
  return {{"last_seq", last_seq}, {"candidates", candidates}, {"summaries", summaries},
          {"attempts", attempts}, {"annotations", ann},       {"compiles", comp}};
}

Views Views::from_json(const json& j) {
  Views v;
  v.last_seq = j.at("last_seq").get<std::int64_t>();
  v.candidates = j.at("candidates").get<std::map<std::string, std::vector<json>>>();
  v.summaries = j.at("summaries").get<std::map<std::string, json>>();
  v.attempts = j.at("attempts").get<std::vector<json>>();
  for (const auto& a : j.at("annotations")) {
    Annotation x;
    x.id = a.at("id").get<std::int64_t>();
    x.problem_id = a.at("problem_id").get<std::string>();
    x.final_code = a.at("final_code").get<std::string>();
    if (!a.at("base_candidate").is_null()) x.base_candidate = a.at("base_candidate");
    x.editor = a.at("editor").get<std::string>();
    x.verifiers = a.at("verifiers").get<std::vector<std::string>>();
    x.event_seq = a.at("event_seq").get<std::int64_t>();
    x.created_at = a.at("created_at").get<std::string>();
    v.annotations[x.id] = std::move(x);
  }
  for (const auto& c : j.at("compiles")) {
    CompileJob job;
    job.request_id = c.at("request_id").get<std::int64_t>();
    job.problem_id = c.at("problem_id").get<std::string>();
    job.code = c.at("code").get<std::string>();
    if (!c.at("result").is_null()) job.result = c.at("result");
    v.compiles[job.request_id] = std::move(job);
  }
  return v;
}

Store::Store(fs::path dir, StoreOptions options) : dir_(std::move(dir)), options_(options) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create store directory " + dir_.string() + ": " + ec.message());

  auto events = load_log(true);

  Views base;
  fs::path snap = dir_ / "snapshot.json";
  if (fs::exists(snap)) {
    try {
      auto j = json::parse(util::read_file(snap));
      base = Views::from_json(j.at("views"));
      if (base.last_seq > (events.empty() ? 0 : events.back().seq)) {
        spdlog::warn("snapshot is ahead of the event log; rebuilding from the log");
        base = Views{};
      }
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable snapshot {}: {}", snap.string(), e.what());
      base = Views{};
    }
  }
  for (const auto& e : events) {
    if (e.seq > base.last_seq) base.apply(e);
  }
  views_ = std::move(base);

  fs::path corpus_file = dir_ / "corpus.jsonl";
  if (fs::exists(corpus_file)) problems_ = corpus::ingest_corpus(corpus_file);

  fd_ = ::open((dir_ / "events.jsonl").c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorKind::io, "cannot open event log: " + std::string(std::strerror(errno)));
}

Store::~Store() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<EventRecord> Store::load_log(bool repair) {
  fs::path file = dir_ / "events.jsonl";
  std::vector<EventRecord> out;
  if (!fs::exists(file)) return out;
  std::string data = util::read_file(file);

  std::size_t pos = 0, good_end = 0;
  std::int64_t last = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    bool complete = nl != std::string::npos;
    std::string_view line(data.data() + pos, (complete ? nl : data.size()) - pos);
    std::optional<EventRecord> rec;
    if (complete) {
      try {
        rec = event_from_json(json::parse(line));
      } catch (const std::exception&) {
      }
    }
    if (!rec) {
      bool is_tail = !complete || nl + 1 >= data.size();
      if (!is_tail) {
        throw Error(ErrorKind::corruption, "unreadable event record at byte " + std::to_string(pos) +
                                               " of " + file.string());
      }
      // a crash mid-append leaves a torn final line
      if (repair) {
        spdlog::warn("dropping torn tail of {} ({} bytes)", file.string(), data.size() - good_end);
        fs::resize_file(file, good_end);
      }
      break;
    }
    if (rec->seq != last + 1) {
      throw Error(ErrorKind::corruption, "event log seq jumps from " + std::to_string(last) + " to " +
                                             std::to_string(rec->seq));
    }
    last = rec->seq;
    out.push_back(std::move(*rec));
    pos = nl + 1;
    good_end = pos;
  }
  return out;
}

std::int64_t Store::append(EventKind kind, json payload) {
  std::lock_guard wlock(write_mu_);
  views_.check(kind, payload);

  EventRecord e;
  e.seq = views_.last_seq + 1;
  e.kind = kind;
  e.payload = std::move(payload);
  e.at = util::now_iso8601();
  std::string line = to_json(e).dump() + "\n";

  std::size_t off = 0;
  while (off < line.size()) {
    auto n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::io, "event log write failed: " + std::string(std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error(ErrorKind::io, "event log fsync failed: " + std::string(std::strerror(errno)));

  {
    std::unique_lock vlock(view_mu_);
    views_.apply(e);
  }
  if (options_.snapshot_every && ++since_snapshot_ >= options_.snapshot_every) {
    since_snapshot_ = 0;
    json snap;
    {
      std::shared_lock vlock(view_mu_);
      snap = {{"seq", views_.last_seq}, {"views", views_.to_json()}};
    }
    util::write_file_atomic(dir_ / "snapshot.json", snap.dump());
  }
  return e.seq;
}

void Store::write_snapshot() {
  std::lock_guard wlock(write_mu_);
  json snap;
  {
    std::shared_lock vlock(view_mu_);
    snap = {{"seq", views_.last_seq}, {"views", views_.to_json()}};
  }
  util::write_file_atomic(dir_ / "snapshot.json", snap.dump());
  since_snapshot_ = 0;
}

Views Store::views() const {
  std::shared_lock lock(view_mu_);
  return views_;
}

std::vector<EventRecord> Store::events() const {
  return const_cast<Store*>(this)->load_log(false);
}

Views Store::replay_from_log() const {
  Views v;
  for (const auto& e : events()) v.apply(e);
  return v;
}

void Store::set_problems(const std::vector<corpus::Problem>& problems) {
  util::write_file_atomic(dir_ / "corpus.jsonl", corpus::serialize_corpus(problems));
  std::unique_lock lock(view_mu_);
  problems_ = problems;
}

std::vector<corpus::Problem> Store::problems() const {
  std::shared_lock lock(view_mu_);
  return problems_;
}

}  // namespace proofforge::hub
