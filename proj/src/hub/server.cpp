#include <httplib.h>

#include <spdlog/spdlog.h>

#include "proofforge/error.hpp"
#include "proofforge/hub.hpp"
#include "proofforge/util.hpp"

namespace proofforge::hub {

using nlohmann::json;

CompileWorker::CompileWorker(Store& store, std::shared_ptr<leanrun::Validator> validator,
                             std::size_t threads)
    : store_(store), validator_(std::move(validator)) {
  for (std::size_t i = 0; i < std::max<std::size_t>(1, threads); ++i) {
    threads_.emplace_back([this] { loop(); });
  }
}

CompileWorker::~CompileWorker() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

std::int64_t CompileWorker::submit(const std::string& problem_id, const std::string& code) {
  auto rid = store_.append(EventKind::compile_requested, {{"problem_id", problem_id}, {"code", code}});
  {
    std::lock_guard lock(mu_);
    queue_.push_back(CompileJob{rid, problem_id, code, std::nullopt});
  }
  cv_.notify_one();
  return rid;
}

std::size_t CompileWorker::resume_pending() {
  auto pending = store_.read([](const Views& v) {
    std::vector<CompileJob> jobs;
    for (const auto& [id, job] : v.compiles) {
      if (!job.result) jobs.push_back(job);
    }
    return jobs;
  });
  {
    std::lock_guard lock(mu_);
    for (auto& j : pending) queue_.push_back(j);
  }
  cv_.notify_all();
  return pending.size();
}

void CompileWorker::drain() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
}

void CompileWorker::loop() {
  for (;;) {
    CompileJob job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++running_;
    }
    leanrun::ValidationResult result;
    try {
      result = validator_->validate(job.code);
    } catch (const std::exception& e) {
      result.status = leanrun::Status::system_error;
      result.raw_log = std::string("error: validator failed: ") + e.what();
    }
    try {
      store_.append(EventKind::compile_completed,
                    {{"request_id", job.request_id}, {"result", leanrun::to_json(result)}});
    } catch (const std::exception& e) {
      spdlog::error("cannot record result of compile request {}: {}", job.request_id, e.what());
    }
    {
      std::lock_guard lock(mu_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

namespace {

AnnotationStatus best_status(const Views& v, const std::string& problem_id, bool& any) {
  AnnotationStatus best = AnnotationStatus::draft;
  any = false;
  for (const auto& [id, a] : v.annotations) {
    if (a.problem_id != problem_id) continue;
    any = true;
    best = std::max(best, a.status());
  }
  return best;
}

json summary_row(const Views& v, const std::string& id, const corpus::Problem* p) {
  json row;
  row["id"] = id;
  if (p) {
    row["source"] = p->source;
    row["kind"] = corpus::to_string(p->kind);
    row["category"] = p->category ? json(corpus::to_string(*p->category)) : json(nullptr);
  }
  int count = 0, valid = 0;
  if (auto it = v.candidates.find(id); it != v.candidates.end()) {
    for (const auto& c : it->second) {
      ++count;
      if (c["final_status"] == "valid") ++valid;
    }
  }
  row["candidate_count"] = count;
  row["valid_count"] = valid;
  row["has_summary"] = v.summaries.count(id) > 0;
  bool any = false;
  auto st = best_status(v, id, any);
  row["annotation_status"] = any ? json(to_string(st)) : json(nullptr);
  return row;
}

// Problems from the corpus first, then ids that only occur in events.
std::vector<std::pair<std::string, std::optional<corpus::Problem>>> known_problems(const Store& store,
                                                                                  const Views& v) {
  std::vector<std::pair<std::string, std::optional<corpus::Problem>>> out;
  std::set<std::string> seen;
  for (const auto& p : store.problems()) {
    if (seen.insert(p.id).second) out.emplace_back(p.id, p);
  }
  auto add = [&](const std::string& id) {
    if (seen.insert(id).second) out.emplace_back(id, std::nullopt);
  };
  for (const auto& [id, _] : v.candidates) add(id);
  for (const auto& [id, _] : v.summaries) add(id);
  for (const auto& [_, a] : v.annotations) add(a.problem_id);
  return out;
}

}  // namespace

json problem_list(const Store& store) {
  auto v = store.views();
  json out = json::array();
  for (const auto& [id, p] : known_problems(store, v)) out.push_back(summary_row(v, id, p ? &*p : nullptr));
  return out;
}

std::string export_annotations(const Store& store, AnnotationStatus min_status) {
  auto v = store.views();
  std::string out;
  for (const auto& [id, a] : v.annotations) {
    if (a.status() < min_status) continue;
    out += to_json(a).dump();
    out += '\n';
  }
  return out;
}

Server::Server(Store& store, std::shared_ptr<leanrun::Validator> validator, ServerConfig config)
    : store_(store),
      config_(std::move(config)),
      worker_(std::make_unique<CompileWorker>(store, std::move(validator), config_.compile_threads)),
      http_(std::make_unique<httplib::Server>()) {
  // httplib's default adds SO_REUSEPORT, which lets a second server share a busy port
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  install_routes();
}

Server::~Server() { stop(); }

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

int http_status(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::io: return 500;
    default: return 400;
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorKind::schema, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::schema, std::string("request body is not JSON: ") + e.what());
  }
}

std::string editor_of(const httplib::Request& req, const json& body) {
  if (body.contains("editor") && body["editor"].is_string()) return body["editor"].get<std::string>();
  return req.get_header_value("X-Editor");
}

std::int64_t parse_id(const std::string& s) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::not_found, "bad id '" + s + "'");
}

}  // namespace

void Server::install_routes() {
  auto& srv = *http_;
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  auto guarded = [](Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  };

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type, X-Editor"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto problem_exists = [this](const Views& v, const std::string& id) {
    for (const auto& [pid, _] : known_problems(store_, v)) {
      if (pid == id) return true;
    }
    return false;
  };

  srv.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"ok", true}, {"last_seq", store_.views().last_seq}});
          }));

  srv.Get("/problems", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, problem_list(store_));
          }));

  srv.Get(R"(/problems/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto id = req.matches[1].str();
            auto v = store_.views();
            for (const auto& [pid, p] : known_problems(store_, v)) {
              if (pid != id) continue;
              json row = summary_row(v, id, p ? &*p : nullptr);
              if (p) row["problem"] = corpus::problem_to_json(*p);
              send_json(res, 200, row);
              return;
            }
            send_error(res, 404, "unknown problem '" + id + "'");
          }));

  srv.Get(R"(/problems/([^/]+)/candidates)",
          guarded([this, problem_exists](const httplib::Request& req, httplib::Response& res) {
            auto id = req.matches[1].str();
            auto v = store_.views();
            if (!problem_exists(v, id)) return send_error(res, 404, "unknown problem '" + id + "'");
            auto it = v.candidates.find(id);
            send_json(res, 200, it == v.candidates.end() ? json::array() : json(it->second));
          }));

  srv.Get(R"(/problems/([^/]+)/summary)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto id = req.matches[1].str();
            auto v = store_.views();
            auto it = v.summaries.find(id);
            if (it == v.summaries.end()) return send_error(res, 404, "no summary for '" + id + "'");
            send_json(res, 200, it->second);
          }));

  srv.Post(R"(/problems/([^/]+)/compile)",
           guarded([this, problem_exists](const httplib::Request& req, httplib::Response& res) {
             auto id = req.matches[1].str();
             if (!problem_exists(store_.views(), id)) return send_error(res, 404, "unknown problem '" + id + "'");
             auto body = parse_body(req);
             if (!body.contains("code") || !body["code"].is_string()) {
               return send_error(res, 400, "body must carry a string field 'code'");
             }
             auto rid = worker_->submit(id, body["code"].get<std::string>());
             send_json(res, 202, {{"request_id", rid}});
           }));

  srv.Get(R"(/compile/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto rid = parse_id(req.matches[1].str());
            auto job = store_.read([&](const Views& v) -> std::optional<CompileJob> {
              auto it = v.compiles.find(rid);
              if (it == v.compiles.end()) return std::nullopt;
              return it->second;
            });
            if (!job) return send_error(res, 404, "no compile request " + std::to_string(rid));
            if (!job->result) return send_json(res, 202, {{"request_id", rid}, {"state", "pending"}});
            json out = *job->result;
            out["request_id"] = rid;
            out["state"] = "done";
            send_json(res, 200, out);
          }));

  srv.Get(R"(/problems/([^/]+)/annotations)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto id = req.matches[1].str();
            auto v = store_.views();
            json out = json::array();
            for (const auto& [aid, a] : v.annotations) {
              if (a.problem_id == id) out.push_back(to_json(a));
            }
            send_json(res, 200, out);
          }));

  srv.Post(R"(/problems/([^/]+)/annotations)",
           guarded([this, problem_exists](const httplib::Request& req, httplib::Response& res) {
             auto id = req.matches[1].str();
             if (!problem_exists(store_.views(), id)) return send_error(res, 404, "unknown problem '" + id + "'");
             auto body = parse_body(req);
             json payload = {{"problem_id", id},
                             {"final_code", body.value("final_code", json(nullptr))},
                             {"editor", editor_of(req, body)}};
             if (body.contains("base_candidate")) payload["base_candidate"] = body["base_candidate"];
             auto seq = store_.append(EventKind::annotation_saved, payload);
             auto a = store_.read([&](const Views& v) { return v.annotations.at(seq); });
             send_json(res, 201, to_json(a));
           }));

  srv.Get(R"(/annotations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto aid = parse_id(req.matches[1].str());
            auto v = store_.views();
            auto it = v.annotations.find(aid);
            if (it == v.annotations.end()) return send_error(res, 404, "no annotation " + std::to_string(aid));
            send_json(res, 200, to_json(it->second));
          }));

  srv.Post(R"(/annotations/([^/]+)/verify)", guarded([this](const httplib::Request& req, httplib::Response& res) {
             auto aid = parse_id(req.matches[1].str());
             auto body = parse_body(req);
             store_.append(EventKind::annotation_verified, {{"annotation_id", aid}, {"editor", editor_of(req, body)}});
             auto a = store_.read([&](const Views& v) { return v.annotations.at(aid); });
             send_json(res, 200, to_json(a));
           }));

  srv.Get("/export/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto min = AnnotationStatus::verified_twice;
            if (req.has_param("min_status")) min = parse_annotation_status(req.get_param_value("min_status"));
            res.status = 200;
            res.set_content(export_annotations(store_, min), "application/x-ndjson");
          }));
}

int Server::bind() {
  if (config_.port == 0) {
    port_ = http_->bind_to_any_port(config_.host);
    if (port_ < 0) throw Error(ErrorKind::startup, "cannot bind any port on " + config_.host);
  } else {
    if (!http_->bind_to_port(config_.host, config_.port)) {
      throw Error(ErrorKind::startup, "cannot bind " + config_.host + ":" + std::to_string(config_.port) +
                                          " (port in use?)");
    }
    port_ = config_.port;
  }
  auto resumed = worker_->resume_pending();
  if (resumed) spdlog::info("re-queued {} pending compile requests", resumed);
  return port_;
}

int Server::start() {
  int port = bind();
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port;
}

void Server::run() {
  bind();
  spdlog::info("serving on http://{}:{}", config_.host, port_);
  http_->listen_after_bind();
}

void Server::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace proofforge::hub
