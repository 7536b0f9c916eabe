#include <algorithm>
#include <atomic>
#include <thread>
#include <unistd.h>

#include "proofforge/error.hpp"
#include "proofforge/leanrun.hpp"
#include "proofforge/util.hpp"

namespace proofforge::leanrun {

using nlohmann::json;
namespace fs = std::filesystem;

Config config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "lean config must be an object");
  Config cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "root") {
      cfg.root = value.get<std::string>();
      if (cfg.root.is_relative() && !base_dir.empty()) cfg.root = base_dir / cfg.root;
    } else if (key == "timeout_s") {
      cfg.timeout = std::chrono::seconds(value.get<int>());
    } else if (key == "pool_size") {
      cfg.pool_size = value.get<std::size_t>();
    } else if (key == "backend") {
      auto b = value.get<std::string>();
      if (b == "real") {
        cfg.backend = Backend::real;
      } else if (b == "fake") {
        cfg.backend = Backend::fake;
      } else {
        throw Error(ErrorKind::invalid_argument, "lean.backend must be real or fake, got '" + b + "'");
      }
    } else if (key == "fixture") {
      fs::path f = value.get<std::string>();
      if (f.is_relative() && !base_dir.empty()) f = base_dir / f;
      cfg.fixture = f;
    } else if (key == "lake_command") {
      cfg.lake_command = value.get<std::vector<std::string>>();
      if (cfg.lake_command.empty()) throw Error(ErrorKind::invalid_argument, "lean.lake_command is empty");
    } else {
      throw Error(ErrorKind::invalid_argument, "unknown lean config key '" + key + "'");
    }
  }
  if (cfg.timeout.count() <= 0) throw Error(ErrorKind::invalid_argument, "lean.timeout_s must be positive");
  return cfg;
}

SlotPool::SlotPool(std::size_t slots) : slots_(std::max<std::size_t>(1, slots)) {}

void SlotPool::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_use_ < slots_; });
  ++in_use_;
  peak_ = std::max(peak_, in_use_);
}

void SlotPool::release() {
  {
    std::lock_guard lock(mu_);
    --in_use_;
  }
  cv_.notify_one();
}

std::size_t SlotPool::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

namespace {

std::size_t default_pool_size() {
  unsigned n = std::thread::hardware_concurrency();
  return std::max(1u, n / 2);
}

ValidationResult system_failure(std::string log) {
  ValidationResult r;
  auto c = classify_log(log);
  r.status = Status::system_error;
  r.diagnostics = std::move(c.diagnostics);
  r.raw_log = std::move(log);
  return r;
}

}  // namespace

LakeValidator::LakeValidator(Config cfg)
    : cfg_(std::move(cfg)), pool_(cfg_.pool_size ? cfg_.pool_size : default_pool_size()) {}

fs::path LakeValidator::make_scratch_dir() {
  static std::atomic<std::uint64_t> counter{0};
  fs::path base = cfg_.root / ".proofforge_scratch";
  fs::create_directories(base);
  for (;;) {
    auto n = counter.fetch_add(1);
    fs::path dir = base / (std::to_string(::getpid()) + "-" + std::to_string(n));
    // create_directory reports false when it already exists, so two
    // processes can never share a directory
    if (fs::create_directory(dir)) return dir;
  }
}

ValidationResult LakeValidator::validate(std::string_view code) {
  std::error_code ec;
  if (cfg_.root.empty() || !fs::is_directory(cfg_.root, ec)) {
    return system_failure("error: lean project root not found: " + cfg_.root.string());
  }
  if (!util::find_executable(cfg_.lake_command.front())) {
    return system_failure("error: no such file or directory: " + cfg_.lake_command.front());
  }

  pool_.acquire();
  struct Release {
    SlotPool& p;
    ~Release() { p.release(); }
  } release{pool_};

  fs::path dir;
  try {
    dir = make_scratch_dir();
    util::write_file_atomic(dir / "Candidate.lean", code);
  } catch (const std::exception& e) {
    return system_failure(std::string("error: cannot prepare scratch workspace: ") + e.what());
  }

  std::vector<std::string> argv = cfg_.lake_command;
  argv.push_back((dir / "Candidate.lean").string());
  util::ProcessOptions opts;
  opts.cwd = cfg_.root;
  opts.timeout = cfg_.timeout;

  util::ProcessResult proc;
  try {
    proc = util::run_process(argv, opts);
  } catch (const Error& e) {
    fs::remove_all(dir, ec);
    return system_failure(std::string("error: ") + e.what());
  }
  fs::remove_all(dir, ec);

  // The scratch path is unique per call; report it as the bare file name so
  // logs are comparable across runs.
  std::string log = proc.output;
  std::string full = (dir / "Candidate.lean").string();
  for (auto pos = log.find(full); pos != std::string::npos; pos = log.find(full, pos)) {
    log.replace(pos, full.size(), "Candidate.lean");
  }
  double secs = std::chrono::duration<double>(proc.elapsed).count();

  if (proc.timed_out) {
    auto r = result_from_log(code, log, secs);
    r.status = Status::timeout;
    return r;
  }
  auto r = result_from_log(code, std::move(log), secs);
  if (proc.exit_code == 127 && r.status != Status::system_error) r.status = Status::system_error;
  if (proc.exit_code != 0 && r.status == Status::success) {
    // non-zero exit without any error diagnostic: the tool itself failed
    r.status = Status::system_error;
  }
  return r;
}

FakeValidator::FakeValidator(std::vector<Rule> rules) : rules_(std::move(rules)) {}

std::shared_ptr<FakeValidator> FakeValidator::from_json(const json& fixture) {
  if (!fixture.is_array()) throw Error(ErrorKind::invalid_argument, "fake lean fixture must be a JSON list");
  std::vector<Rule> rules;
  for (const auto& item : fixture) {
    Rule r;
    r.match = item.at("match").get<std::string>();
    r.log = item.value("log", "");
    r.times = item.value("times", -1);
    r.timeout = item.value("timeout", false);
    rules.push_back(std::move(r));
  }
  return std::make_shared<FakeValidator>(std::move(rules));
}

std::shared_ptr<FakeValidator> FakeValidator::from_file(const fs::path& path) {
  try {
    return from_json(json::parse(util::read_file(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, "bad fake lean fixture " + path.string() + ": " + e.what());
  }
}

void FakeValidator::add_rule(Rule rule) {
  std::lock_guard lock(mu_);
  rules_.push_back(std::move(rule));
}

ValidationResult FakeValidator::validate(std::string_view code) {
  std::string log;
  bool timeout = false;
  {
    std::lock_guard lock(mu_);
    seen_.emplace_back(code);
    for (auto& rule : rules_) {
      if (rule.times == 0) continue;
      if (code.find(rule.match) == std::string_view::npos) continue;
      if (rule.times > 0) --rule.times;
      log = rule.log;
      timeout = rule.timeout;
      break;
    }
  }
  auto r = result_from_log(code, std::move(log), 0.0);
  if (timeout) r.status = Status::timeout;
  return r;
}

std::vector<std::string> FakeValidator::seen() const {
  std::lock_guard lock(mu_);
  return seen_;
}

std::size_t FakeValidator::call_count() const {
  std::lock_guard lock(mu_);
  return seen_.size();
}

std::shared_ptr<Validator> make_validator(const Config& cfg) {
  if (cfg.backend == Backend::real) return std::make_shared<LakeValidator>(cfg);
  if (cfg.fixture) return FakeValidator::from_file(*cfg.fixture);
  return std::make_shared<FakeValidator>();
}

}  // namespace proofforge::leanrun
