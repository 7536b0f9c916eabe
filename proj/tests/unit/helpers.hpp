#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "proofforge/leanrun.hpp"
#include "proofforge/modelgw.hpp"
#include "proofforge/util.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(PF_FIXTURES) / name; }

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("pf-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

// Gateway wired to a fresh scripted backend, with sleeps recorded instead of taken.
struct Scripted {
  std::shared_ptr<proofforge::modelgw::ScriptedBackend> backend =
      std::make_shared<proofforge::modelgw::ScriptedBackend>();
  proofforge::modelgw::Gateway gateway;
  std::vector<std::chrono::milliseconds> sleeps;

  Scripted() {
    gateway.set_backend(proofforge::modelgw::Provider::scripted, backend);
    gateway.set_sleeper([this](std::chrono::milliseconds d) { sleeps.push_back(d); });
  }
};

inline proofforge::modelgw::ModelSpec model(const std::string& name) {
  proofforge::modelgw::ModelSpec s;
  s.name = name;
  return s;
}

inline std::string lean_reply(const std::string& code) { return "Answer:\n\n```lean\n" + code + "\n```\n"; }

}  // namespace testing
