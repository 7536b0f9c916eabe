#include <algorithm>
#include <thread>

#include <spdlog/spdlog.h>

#include "proofforge/error.hpp"
#include "proofforge/modelgw.hpp"
#include "proofforge/util.hpp"

namespace proofforge::modelgw {

using nlohmann::json;

std::string_view to_string(Provider p) {
  switch (p) {
    case Provider::http_openai_style: return "http_openai_style";
    case Provider::http_anthropic_style: return "http_anthropic_style";
    case Provider::scripted: return "scripted";
  }
  return "scripted";
}

Provider parse_provider(std::string_view s) {
  if (s == "http_openai_style" || s == "openai") return Provider::http_openai_style;
  if (s == "http_anthropic_style" || s == "anthropic") return Provider::http_anthropic_style;
  if (s == "scripted") return Provider::scripted;
  throw Error(ErrorKind::invalid_argument, "unknown provider '" + std::string(s) + "'");
}

void validate(const ModelSpec& spec) {
  if (spec.name.empty()) throw Error(ErrorKind::invalid_argument, "model spec without a name");
  if (spec.provider != Provider::scripted && (!spec.endpoint || spec.endpoint->empty())) {
    throw Error(ErrorKind::invalid_argument,
                "model '" + spec.name + "' uses an HTTP provider but has no endpoint");
  }
  if (spec.max_retries < 0) {
    throw Error(ErrorKind::invalid_argument, "model '" + spec.name + "': max_retries < 0");
  }
  if (spec.requests_per_minute < 0) {
    throw Error(ErrorKind::invalid_argument,
                "model '" + spec.name + "': requests_per_minute < 0");
  }
}

ModelSpec model_spec_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "model spec must be an object");
  static const std::vector<std::string> kKeys = {
      "name", "provider", "endpoint", "params", "timeout_s", "max_retries", "requests_per_minute"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(ErrorKind::invalid_argument, "unknown model spec key '" + key + "'");
    }
  }
  ModelSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.provider = parse_provider(j.value("provider", std::string("scripted")));
    if (j.contains("endpoint") && !j["endpoint"].is_null()) {
      spec.endpoint = j["endpoint"].get<std::string>();
    }
    if (j.contains("params")) spec.params = j["params"];
    spec.timeout = std::chrono::seconds(j.value("timeout_s", 600));
    spec.max_retries = j.value("max_retries", 2);
    spec.requests_per_minute = j.value("requests_per_minute", 0.0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("bad model spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

json model_spec_to_json(const ModelSpec& spec) {
  json j = {{"name", spec.name},
            {"provider", to_string(spec.provider)},
            {"params", spec.params},
            {"timeout_s", spec.timeout.count()},
            {"max_retries", spec.max_retries},
            {"requests_per_minute", spec.requests_per_minute}};
  if (spec.endpoint) j["endpoint"] = *spec.endpoint;
  return j;
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Transcript& Transcript::system(std::string content) {
  messages.push_back({Role::system, std::move(content)});
  return *this;
}
Transcript& Transcript::user(std::string content) {
  messages.push_back({Role::user, std::move(content)});
  return *this;
}
Transcript& Transcript::assistant(std::string content) {
  messages.push_back({Role::assistant, std::move(content)});
  return *this;
}

bool Transcript::well_formed() const {
  std::size_t i = 0;
  if (!messages.empty() && messages[0].role == Role::system) i = 1;
  Role expected = Role::user;
  for (; i < messages.size(); ++i) {
    if (messages[i].role != expected) return false;
    expected = expected == Role::user ? Role::assistant : Role::user;
  }
  return true;
}

bool Transcript::ends_with_user() const {
  return !messages.empty() && messages.back().role == Role::user;
}

json transcript_to_json(const Transcript& t) {
  json arr = json::array();
  for (const auto& m : t.messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

Transcript transcript_from_json(const json& j) {
  Transcript t;
  for (const auto& m : j) {
    auto role = m.at("role").get<std::string>();
    Role r = role == "system" ? Role::system : role == "assistant" ? Role::assistant : Role::user;
    t.messages.push_back({r, m.at("content").get<std::string>()});
  }
  return t;
}

std::chrono::milliseconds backoff_delay(int retry) {
  using namespace std::chrono;
  if (retry < 1) retry = 1;
  long long ms = 1000;
  for (int i = 1; i < retry && ms < 30000; ++i) ms *= 2;
  return milliseconds(std::min<long long>(ms, 30000));
}

Gateway::Gateway() : sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  auto http = std::make_shared<HttpBackend>();
  backends_[Provider::http_openai_style] = http;
  backends_[Provider::http_anthropic_style] = http;
}

void Gateway::set_backend(Provider provider, std::shared_ptr<ChatBackend> backend) {
  std::lock_guard lock(mu_);
  backends_[provider] = std::move(backend);
}

void Gateway::set_sleeper(Sleeper sleeper) {
  std::lock_guard lock(mu_);
  sleeper_ = std::move(sleeper);
}

void Gateway::throttle(const ModelSpec& spec) {
  if (spec.requests_per_minute <= 0) return;
  using namespace std::chrono;
  auto interval = duration_cast<steady_clock::duration>(
      duration<double>(60.0 / spec.requests_per_minute));
  steady_clock::duration wait{0};
  Sleeper sleeper;
  {
    std::lock_guard lock(mu_);
    auto now = steady_clock::now();
    auto& slot = next_slot_[spec.name];
    auto start = std::max(now, slot);
    wait = start - now;
    slot = start + interval;
    sleeper = sleeper_;
  }
  if (wait > steady_clock::duration::zero()) sleeper(duration_cast<milliseconds>(wait));
}

std::string Gateway::complete(const ModelSpec& spec, const Transcript& t) {
  if (t.messages.empty() || !t.ends_with_user()) {
    throw Error(ErrorKind::invalid_argument, "transcript must be nonempty and end with a user message");
  }
  if (!t.well_formed()) {
    throw Error(ErrorKind::invalid_argument, "transcript roles do not alternate");
  }
  std::shared_ptr<ChatBackend> backend;
  Sleeper sleeper;
  {
    std::lock_guard lock(mu_);
    auto it = backends_.find(spec.provider);
    if (it == backends_.end() || !it->second) {
      throw Error(ErrorKind::provider,
                  "no backend configured for provider " + std::string(to_string(spec.provider)));
    }
    backend = it->second;
    sleeper = sleeper_;
  }

  for (int attempt = 1;; ++attempt) {
    throttle(spec);
    try {
      std::string text = backend->send(spec, t);
      std::lock_guard lock(mu_);
      log_.push_back({spec.name, attempt, true, {}});
      return text;
    } catch (const Error& e) {
      {
        std::lock_guard lock(mu_);
        log_.push_back({spec.name, attempt, false, e.what()});
      }
      if (!e.retryable()) throw;
      if (attempt > spec.max_retries) {
        throw Error(ErrorKind::transport,
                    "model '" + spec.name + "' failed after " + std::to_string(attempt) +
                        " attempts: " + e.what());
      }
      auto delay = backoff_delay(attempt);
      spdlog::warn("model '{}' attempt {} failed ({}); retrying in {} ms", spec.name, attempt,
                   e.what(), delay.count());
      sleeper(delay);
    }
  }
}

std::vector<CallRecord> Gateway::call_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t Gateway::call_count(const std::string& model) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(log_.begin(), log_.end(), [&](const CallRecord& r) { return r.model == model; }));
}

// ---------------------------------------------------------------------------

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& fixture) {
  if (!fixture.is_object()) {
    throw Error(ErrorKind::invalid_argument, "scripted fixture must map model names to response lists");
  }
  auto backend = std::make_shared<ScriptedBackend>();
  for (const auto& [model, responses] : fixture.items()) {
    if (!responses.is_array()) {
      throw Error(ErrorKind::invalid_argument, "scripted fixture for '" + model + "' is not a list");
    }
    for (const auto& r : responses) {
      if (r.is_string()) {
        backend->enqueue(model, r.get<std::string>());
      } else if (r.is_object() && r.contains("transport_error")) {
        backend->enqueue_failure(model, r["transport_error"].get<std::string>());
      } else {
        throw Error(ErrorKind::invalid_argument, "bad scripted entry for '" + model + "'");
      }
    }
  }
  return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ScriptedBackend::enqueue(const std::string& model, std::string response) {
  std::lock_guard lock(mu_);
  queues_[model].push_back({std::move(response), false});
}

void ScriptedBackend::enqueue_failure(const std::string& model, std::string message) {
  std::lock_guard lock(mu_);
  queues_[model].push_back({std::move(message), true});
}

std::string ScriptedBackend::send(const ModelSpec& spec, const Transcript& t) {
  std::lock_guard lock(mu_);
  calls_[spec.name].push_back(t);
  auto& q = queues_[spec.name];
  if (q.empty()) {
    throw Error(ErrorKind::fixture_underrun,
                "scripted responses exhausted for model '" + spec.name + "' at call " +
                    std::to_string(calls_[spec.name].size()));
  }
  Entry e = std::move(q.front());
  q.pop_front();
  if (e.transport_failure) throw Error(ErrorKind::transport, e.text);
  return e.text;
}

std::vector<Transcript> ScriptedBackend::calls(const std::string& model) const {
  std::lock_guard lock(mu_);
  auto it = calls_.find(model);
  return it == calls_.end() ? std::vector<Transcript>{} : it->second;
}

std::size_t ScriptedBackend::call_count(const std::string& model) const {
  std::lock_guard lock(mu_);
  auto it = calls_.find(model);
  return it == calls_.end() ? 0 : it->second.size();
}

std::size_t ScriptedBackend::remaining(const std::string& model) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(model);
  return it == queues_.end() ? 0 : it->second.size();
}

}  // namespace proofforge::modelgw
