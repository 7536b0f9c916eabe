#include "proofforge/contextkb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "proofforge/error.hpp"
#include "proofforge/util.hpp"

namespace proofforge::contextkb {

using nlohmann::json;
namespace fs = std::filesystem;

ContextPack make_pack(Category cat, std::string body, std::vector<std::string> manifest) {
  ContextPack p;
  p.category = cat;
  p.checksum = util::sha256_hex(body);
  p.body = std::move(body);
  p.manifest = std::move(manifest);
  p.built_at = util::now_iso8601();
  return p;
}

json sidecar_json(const ContextPack& pack) {
  return {{"category", corpus::to_string(pack.category)},
          {"checksum", pack.checksum},
          {"manifest", pack.manifest},
          {"built_at", pack.built_at}};
}

std::string_view to_string(Tool t) { return t == Tool::run_bash ? "run_bash" : "final_submit"; }

json to_json(const ToolCall& c) {
  return {{"tool", to_string(c.tool)}, {"argument", c.argument}, {"observation", c.observation}};
}

ToolCall tool_call_from_json(const json& j) {
  ToolCall c;
  auto tool = j.at("tool").get<std::string>();
  if (tool == "run_bash") {
    c.tool = Tool::run_bash;
  } else if (tool == "final_submit") {
    c.tool = Tool::final_submit;
  } else {
    throw Error(ErrorKind::schema, "unknown tool '" + tool + "'");
  }
  c.argument = j.at("argument").get<std::string>();
  c.observation = j.value("observation", "");
  return c;
}

std::vector<Problem> sample_for_category(const std::vector<Problem>& problems, Category cat,
                                         double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "sample ratio must be in (0, 1]");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (problems[i].category == cat) idx.push_back(i);
  }
  // the epsilon keeps 0.25 * 8 from rounding up to 3
  auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(idx.size()) - 1e-9));
  k = std::min(k, idx.size());

  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (auto i : idx) keyed.emplace_back(util::splitmix64(seed ^ util::fnv1a64(problems[i].id)), i);
  std::sort(keyed.begin(), keyed.end());
  keyed.resize(k);
  std::sort(keyed.begin(), keyed.end(), [](auto& a, auto& b) { return a.second < b.second; });

  std::vector<Problem> out;
  for (auto& [_, i] : keyed) out.push_back(problems[i]);
  return out;
}

std::optional<ToolCall> parse_tool_call(std::string_view response) {
  struct Tag {
    Tool tool;
    std::string_view open, close;
  };
  const Tag tags[] = {{Tool::run_bash, "<run_bash>", "</run_bash>"},
                      {Tool::final_submit, "<final_submit>", "</final_submit>"}};
  const Tag* first = nullptr;
  std::size_t first_pos = std::string_view::npos;
  for (const auto& t : tags) {
    auto pos = response.find(t.open);
    if (pos < first_pos) {
      first_pos = pos;
      first = &t;
    }
  }
  if (!first) return std::nullopt;
  auto start = first_pos + first->open.size();
  auto end = response.find(first->close, start);
  ToolCall call;
  call.tool = first->tool;
  call.argument = util::trim(response.substr(start, end == std::string_view::npos ? end : end - start));
  return call;
}

std::string render_tool_call(const ToolCall& call) {
  auto tag = std::string(to_string(call.tool));
  return "<" + tag + ">\n" + call.argument + "\n</" + tag + ">";
}

std::string render_observation(const ToolCall& call) {
  return "<observation>\n" + call.observation + "\n</observation>";
}

std::string format_examples(const std::vector<Problem>& samples) {
  std::string out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i) out += "\n\n";
    out += "Example " + std::to_string(i + 1) + " (" + samples[i].id + "):\n" + samples[i].statement_nl;
  }
  return out;
}

modelgw::Transcript agent_preamble(Category cat, const std::vector<Problem>& samples,
                                   const fs::path& scratch) {
  modelgw::Transcript t;
  t.system(modelgw::render_prompt(modelgw::PromptId::kb_agent_system,
                                  {{"working_directory", scratch.string()}}));
  t.user(modelgw::render_prompt(modelgw::PromptId::kb_agent_user,
                                {{"category", std::string(corpus::display_name(cat))},
                                 {"examples", format_examples(samples)},
                                 {"working_directory", scratch.string()}}));
  return t;
}

modelgw::Transcript replay_transcript(const modelgw::Transcript& preamble,
                                      const std::vector<ToolCall>& calls) {
  modelgw::Transcript t = preamble;
  for (const auto& c : calls) {
    t.assistant(render_tool_call(c));
    if (c.tool == Tool::run_bash) t.user(render_observation(c));
  }
  return t;
}

namespace {

constexpr std::string_view kProtocolFeedback =
    "Your response did not contain a tool call. Every response must be exactly one tool call: "
    "<run_bash>command</run_bash> or <final_submit>documentation</final_submit>.";

bool inside(const fs::path& p, const fs::path& dir) {
  auto rel = p.lexically_normal().lexically_relative(dir);
  return !rel.empty() && *rel.begin() != "..";
}

std::string relative_name(const fs::path& p, const fs::path& repo) {
  auto rel = p.lexically_normal().lexically_relative(repo).string();
  if (!rel.empty() && rel.back() == '/') rel.pop_back();
  return rel.empty() ? "." : rel;
}

class Episode {
 public:
  Episode(fs::path repo, fs::path scratch, const AgentOptions& opts)
      : repo_(std::move(repo)), scratch_(std::move(scratch)), opts_(opts), cwd_(repo_) {}

  std::string run_bash(const std::string& cmd) {
    if (auto reason = check_command(cmd, cwd_, scratch_)) {
      return "error: command rejected: " + *reason;
    }
    note_paths(cmd);

    std::istringstream words(cmd);
    std::string head, target, extra;
    words >> head >> target >> extra;
    if (head == "cd" && extra.empty() && cmd.find_first_of(";&|") == std::string::npos) {
      fs::path dest = target.empty() ? repo_ : fs::path(target);
      if (dest.is_relative()) dest = cwd_ / dest;
      dest = dest.lexically_normal();
      std::error_code ec;
      if (!fs::is_directory(dest, ec)) return "error: cd: no such directory: " + target;
      if (!inside(dest, repo_) && !inside(dest, scratch_) && dest != repo_ && dest != scratch_) {
        return "error: cd outside the repository is not allowed";
      }
      cwd_ = dest;
      return "(working directory: " + cwd_.string() + ")";
    }

    util::ProcessOptions po;
    po.cwd = cwd_;
    po.timeout = opts_.command_timeout;
    po.output_cap = opts_.observation_cap * 4;
    auto res = util::run_process({"/bin/sh", "-c", cmd}, po);
    std::string trailer;
    if (res.timed_out) {
      trailer = "\n[command timed out after " + std::to_string(opts_.command_timeout.count()) + "s]";
    } else if (res.exit_code != 0) {
      trailer = "\n[exit code " + std::to_string(res.exit_code) + "]";
    }
    return cap(res.output, trailer);
  }

  std::vector<std::string> manifest() const { return manifest_; }

 private:
  std::string cap(const std::string& output, const std::string& trailer) const {
    std::size_t cap = opts_.observation_cap;
    if (output.size() + trailer.size() <= cap) return output + trailer;
    const std::string marker = "\n[output truncated]";
    std::size_t room = cap > marker.size() + trailer.size() ? cap - marker.size() - trailer.size() : 0;
    return util::truncate_utf8(output, room) + marker + trailer;
  }

  void note_paths(const std::string& cmd) {
    std::istringstream in(cmd);
    std::string w, head;
    bool any = false;
    in >> head;
    while (in >> w) {
      w.erase(std::remove_if(w.begin(), w.end(), [](char c) { return c == '\'' || c == '"'; }), w.end());
      while (!w.empty() && (w.back() == ';' || w.back() == '|' || w.back() == '&')) w.pop_back();
      if (w.empty() || w.front() == '-') continue;
      fs::path p(w);
      if (p.is_relative()) p = cwd_ / p;
      p = p.lexically_normal();
      std::error_code ec;
      if ((inside(p, repo_) || p == repo_) && fs::exists(p, ec)) {
        add(relative_name(p, repo_));
        any = true;
      }
    }
    if (!any && (head == "ls" || head == "find" || head == "tree") && (inside(cwd_, repo_) || cwd_ == repo_)) {
      add(relative_name(cwd_, repo_));
    }
  }

  void add(const std::string& path) {
    if (seen_.insert(path).second) manifest_.push_back(path);
  }

  fs::path repo_, scratch_;
  AgentOptions opts_;
  fs::path cwd_;
  std::vector<std::string> manifest_;
  std::set<std::string> seen_;
};

json episode_detail(const modelgw::Transcript& t, const std::vector<ToolCall>& calls) {
  json jc = json::array();
  for (const auto& c : calls) jc.push_back(to_json(c));
  return {{"transcript", modelgw::transcript_to_json(t)}, {"calls", jc}};
}

}  // namespace

AgentRun build_context(Category cat, const std::vector<Problem>& samples, modelgw::Gateway& gateway,
                       const modelgw::ModelSpec& agent_model, const fs::path& repo_root,
                       const AgentOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(repo_root, ec)) {
    throw Error(ErrorKind::invalid_argument, "repository root does not exist: " + repo_root.string());
  }
  if (options.budget < 1) throw Error(ErrorKind::invalid_argument, "agent budget must be at least 1");

  fs::path scratch = options.scratch_dir;
  if (scratch.empty()) {
    scratch = fs::temp_directory_path() / ("proofforge-notes-" + std::string(corpus::to_string(cat)));
  }
  fs::create_directories(scratch);
  fs::path repo = fs::canonical(repo_root);
  scratch = fs::canonical(scratch);

  AgentRun run;
  const auto preamble = agent_preamble(cat, samples, scratch);
  run.transcript = preamble;
  Episode episode(repo, scratch, options);
  int violations = 0;
  std::optional<std::pair<std::string, std::string>> pending;  // bad response + feedback

  for (std::size_t used = 0; used < options.budget; ++used) {
    modelgw::Transcript request = run.transcript;
    if (pending) request.assistant(pending->first).user(pending->second);
    std::string response = gateway.complete(agent_model, request);

    auto call = parse_tool_call(response);
    if (!call || (call->tool == Tool::final_submit && call->argument.empty())) {
      if (++violations >= 2) {
        auto t = request;
        t.assistant(response);
        throw Error(ErrorKind::protocol, "agent answered without a tool call twice",
                    episode_detail(t, run.calls).dump());
      }
      pending.emplace(response, std::string(kProtocolFeedback));
      continue;
    }
    pending.reset();

    if (call->tool == Tool::final_submit) {
      run.calls.push_back(*call);
      run.transcript = replay_transcript(preamble, run.calls);
      run.pack = make_pack(cat, call->argument, episode.manifest());
      return run;
    }
    call->observation = episode.run_bash(call->argument);
    run.calls.push_back(*call);
    run.transcript = replay_transcript(preamble, run.calls);
  }
  throw Error(ErrorKind::incomplete_context,
              "agent used its budget of " + std::to_string(options.budget) +
                  " calls without final_submit for " + std::string(corpus::to_string(cat)),
              episode_detail(run.transcript, run.calls).dump());
}

ContextStore::ContextStore(fs::path dir) : dir_(std::move(dir)) {}

fs::path ContextStore::body_path(Category cat) const {
  return dir_ / (std::string(corpus::to_string(cat)) + ".md");
}

fs::path ContextStore::sidecar_path(Category cat) const {
  return dir_ / (std::string(corpus::to_string(cat)) + ".json");
}

void ContextStore::put(const ContextPack& pack) {
  if (util::trim(pack.body).empty()) throw Error(ErrorKind::invalid_argument, "context body is empty");
  if (pack.checksum != util::sha256_hex(pack.body)) {
    throw Error(ErrorKind::invalid_argument, "context pack checksum does not match its body");
  }
  std::lock_guard lock(mu_);
  fs::create_directories(dir_);
  util::write_file_atomic(body_path(pack.category), pack.body);
  util::write_file_atomic(sidecar_path(pack.category), sidecar_json(pack).dump(2) + "\n");
}

bool ContextStore::has(Category cat) const {
  std::lock_guard lock(mu_);
  return fs::exists(body_path(cat)) && fs::exists(sidecar_path(cat));
}

ContextPack ContextStore::get(Category cat) const {
  std::lock_guard lock(mu_);
  auto body_file = body_path(cat);
  auto side_file = sidecar_path(cat);
  if (!fs::exists(body_file) || !fs::exists(side_file)) {
    std::string c(corpus::to_string(cat));
    throw Error(ErrorKind::not_built, "no context pack for " + c + " in " + dir_.string() +
                                          "; run `proofforge context build --category " + c +
                                          " --repo <mathlib>` or `proofforge context import <file>`");
  }
  ContextPack pack;
  pack.category = cat;
  pack.body = util::read_file(body_file);
  json side;
  try {
    side = json::parse(util::read_file(side_file));
    pack.checksum = side.at("checksum").get<std::string>();
    pack.manifest = side.value("manifest", std::vector<std::string>{});
    pack.built_at = side.value("built_at", "");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::corruption, "unreadable sidecar " + side_file.string() + ": " + e.what());
  }
  if (util::sha256_hex(pack.body) != pack.checksum) {
    throw Error(ErrorKind::corruption, "context pack " + body_file.string() +
                                           " does not match its recorded checksum");
  }
  return pack;
}

ContextPack ContextStore::import_file(const fs::path& file, std::optional<Category> cat) {
  if (!cat) cat = corpus::parse_category(file.stem().string());
  if (!cat) {
    throw Error(ErrorKind::invalid_argument,
                "cannot tell the category of " + file.string() + "; pass it explicitly");
  }
  auto pack = make_pack(*cat, util::read_file(file), {file.filename().string()});
  put(pack);
  return pack;
}

ContextPack get_context(Category cat, const ContextStore& store) { return store.get(cat); }

}  // namespace proofforge::contextkb
