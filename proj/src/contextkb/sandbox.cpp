#include <algorithm>
#include <cctype>
#include <set>

#include "proofforge/contextkb.hpp"

namespace proofforge::contextkb {

namespace fs = std::filesystem;

namespace {

struct ShellToken {
  std::string text;
  bool op = false;        // | || && ; & newline
  bool redirect = false;  // > >> 2> &> ...
};

// Splits a command line into words, control operators and redirections.
// Quoting follows sh closely enough for inspection purposes.
std::optional<std::string> tokenize(std::string_view cmd, std::vector<ShellToken>& out) {
  std::string word;
  bool have_word = false;
  auto flush = [&] {
    if (have_word) out.push_back({word, false, false});
    word.clear();
    have_word = false;
  };
  for (std::size_t i = 0; i < cmd.size(); ++i) {
    char c = cmd[i];
    if (c == '\'') {
      auto end = cmd.find('\'', i + 1);
      if (end == std::string_view::npos) return "unterminated quote";
      word.append(cmd.substr(i + 1, end - i - 1));
      have_word = true;
      i = end;
    } else if (c == '"') {
      std::size_t j = i + 1;
      for (; j < cmd.size() && cmd[j] != '"'; ++j) {
        if (cmd[j] == '\\' && j + 1 < cmd.size()) {
          word.push_back(cmd[++j]);
        } else if (cmd[j] == '`' || (cmd[j] == '$' && j + 1 < cmd.size() && cmd[j + 1] == '(')) {
          return "command substitution is not allowed";
        } else {
          word.push_back(cmd[j]);
        }
      }
      if (j >= cmd.size()) return "unterminated quote";
      have_word = true;
      i = j;
    } else if (c == '\\' && i + 1 < cmd.size()) {
      word.push_back(cmd[++i]);
      have_word = true;
    } else if (c == '`' || (c == '$' && i + 1 < cmd.size() && cmd[i + 1] == '(')) {
      return "command substitution is not allowed";
    } else if (c == ' ' || c == '\t') {
      flush();
    } else if (c == '\n' || c == ';' || c == '|' || c == '&') {
      // `&>` and `>&` are redirections, handled below
      if (c == '&' && i + 1 < cmd.size() && cmd[i + 1] == '>') {
        flush();
        std::size_t j = i + 2;
        if (j < cmd.size() && cmd[j] == '>') ++j;
        out.push_back({std::string(cmd.substr(i, j - i)), false, true});
        i = j - 1;
        continue;
      }
      flush();
      std::string op(1, c);
      if ((c == '|' || c == '&') && i + 1 < cmd.size() && cmd[i + 1] == c) op.push_back(cmd[++i]);
      out.push_back({op, true, false});
    } else if (c == '>' || ((c >= '0' && c <= '9') && i + 1 < cmd.size() && cmd[i + 1] == '>' &&
                            !have_word)) {
      flush();
      std::size_t j = i;
      if (c != '>') ++j;  // fd digit
      ++j;
      if (j < cmd.size() && cmd[j] == '>') ++j;
      if (j < cmd.size() && cmd[j] == '&') {
        // fd duplication like 2>&1 writes nothing new
        ++j;
        while (j < cmd.size() && (std::isdigit(static_cast<unsigned char>(cmd[j])) || cmd[j] == '-')) ++j;
        i = j - 1;
        continue;
      }
      out.push_back({std::string(cmd.substr(i, j - i)), false, true});
      i = j - 1;
    } else if (c == '<') {
      flush();
      out.push_back({"<", false, true});
    } else {
      word.push_back(c);
      have_word = true;
    }
  }
  flush();
  return std::nullopt;
}

bool inside(const fs::path& p, const fs::path& dir) {
  auto rel = p.lexically_normal().lexically_relative(dir.lexically_normal());
  return !rel.empty() && *rel.begin() != "..";
}

std::string base_name(const std::string& w) { return fs::path(w).filename().string(); }

const std::set<std::string> kDenied = {"rm",       "mv",     "rmdir",   "shred", "dd",    "chmod",
                                       "chown",    "chgrp",  "ln",      "truncate", "unlink",
                                       "install",  "rsync",  "patch",   "sh",    "bash",  "zsh",
                                       "sudo",     "su",     "eval",    "exec",  "source", "."};

const std::set<std::string> kGitWrites = {
    "add",   "commit", "push",   "pull",  "fetch",  "checkout", "switch",  "restore",
    "reset", "clean",  "rm",     "mv",    "stash",  "merge",    "rebase",  "apply",
    "am",    "cherry-pick", "revert", "tag", "branch", "init",  "clone",   "gc",
    "prune", "worktree", "submodule", "config", "update-index", "update-ref", "notes"};

}  // namespace

std::optional<std::string> check_command(std::string_view command, const fs::path& cwd,
                                         const fs::path& scratch) {
  std::vector<ShellToken> tokens;
  if (auto err = tokenize(command, tokens)) return *err;

  auto resolve = [&](const std::string& w) {
    fs::path p(w);
    return p.is_absolute() ? p : cwd / p;
  };
  auto writable = [&](const std::string& w) { return w == "/dev/null" || inside(resolve(w), scratch); };

  std::vector<std::vector<ShellToken>> commands(1);
  for (auto& t : tokens) {
    if (t.op) {
      commands.emplace_back();
    } else {
      commands.back().push_back(t);
    }
  }

  for (const auto& simple : commands) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < simple.size(); ++i) {
      if (simple[i].redirect) {
        if (i + 1 >= simple.size()) return "redirection without a target";
        const auto& target = simple[i + 1].text;
        if (simple[i].text != "<" && !writable(target)) {
          return "redirection outside the notes directory: " + target;
        }
        ++i;
        continue;
      }
      words.push_back(simple[i].text);
    }
    // leading VAR=value assignments
    while (!words.empty() && words.front().find('=') != std::string::npos &&
           words.front().front() != '-' && words.front().front() != '=') {
      words.erase(words.begin());
    }
    if (words.empty()) continue;

    std::vector<std::string> args(words.begin() + 1, words.end());
    std::vector<std::string> operands;
    for (const auto& a : args) {
      if (a.empty() || a.front() != '-') operands.push_back(a);
    }
    std::string head = base_name(words.front());

    if (kDenied.count(head)) return "'" + head + "' is not allowed";
    if (head == "sed" || head == "perl") {
      for (const auto& a : args) {
        bool short_flags = a.size() > 1 && a[0] == '-' && a[1] != '-';
        if (a.rfind("-i", 0) == 0 || a.rfind("--in-place", 0) == 0 ||
            (head == "perl" && short_flags && a.find('i') != std::string::npos)) {
          return "in-place editing is not allowed";
        }
      }
    }
    if (head == "git") {
      for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        // global options whose value is a separate word
        if (a == "-C" || a == "-c" || a == "--git-dir" || a == "--work-tree" || a == "--namespace") {
          ++i;
          continue;
        }
        if (!a.empty() && a.front() == '-') continue;
        if (kGitWrites.count(a)) return "git " + a + " is not allowed";
        break;
      }
    }
    if (head == "find") {
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "-delete" || args[i] == "-fprint" || args[i] == "-fls") {
          return "find " + args[i] + " is not allowed";
        }
        if ((args[i] == "-exec" || args[i] == "-execdir" || args[i] == "-ok") && i + 1 < args.size() &&
            kDenied.count(base_name(args[i + 1]))) {
          return "find -exec " + args[i + 1] + " is not allowed";
        }
      }
    }
    if (head == "xargs") {
      for (const auto& a : operands) {
        if (kDenied.count(base_name(a))) return "xargs " + a + " is not allowed";
        break;
      }
    }
    if (head == "tee" || head == "touch" || head == "mkdir") {
      for (const auto& a : operands) {
        if (!writable(a)) return head + " outside the notes directory: " + a;
      }
    }
    if (head == "cp") {
      if (operands.empty() || !writable(operands.back())) {
        return "cp may only copy into the notes directory";
      }
    }
  }
  return std::nullopt;
}

}  // namespace proofforge::contextkb
