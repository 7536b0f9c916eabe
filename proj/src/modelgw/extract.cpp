#include <cctype>

#include "proofforge/error.hpp"
#include "proofforge/modelgw.hpp"
#include "proofforge/util.hpp"

namespace proofforge::modelgw {

std::optional<std::string> tagged_section(std::string_view text, std::string_view tag) {
  std::string open = "<" + std::string(tag) + ">";
  std::string close = "</" + std::string(tag) + ">";
  auto start = text.rfind(open);
  if (start == std::string_view::npos) return std::nullopt;
  start += open.size();
  auto end = text.find(close, start);
  if (end == std::string_view::npos) end = text.size();
  return std::string(text.substr(start, end - start));
}

namespace {

struct Fence {
  std::string info;
  std::string content;
};

bool is_word(std::string_view s) {
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '+') return false;
  }
  return true;
}

std::vector<Fence> fence_spans(std::string_view text) {
  std::vector<Fence> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t after = open + 3;
    auto close = text.find("```", after);
    std::size_t body_end = close == std::string_view::npos ? text.size() : close;
    std::string_view inner = text.substr(after, body_end - after);
    Fence f;
    auto nl = inner.find('\n');
    std::string_view first = nl == std::string_view::npos ? inner : inner.substr(0, nl);
    std::string info = util::trim(first);
    if (nl != std::string_view::npos && is_word(info)) {
      f.info = util::to_lower_ascii(info);
      f.content = std::string(inner.substr(nl + 1));
    } else if (nl == std::string_view::npos && util::starts_with(info, "lean ")) {
      f.info = "lean";
      f.content = info.substr(5);
    } else {
      f.content = std::string(inner);
    }
    out.push_back(std::move(f));
    if (close == std::string_view::npos) break;
    pos = close + 3;
  }
  return out;
}

}  // namespace

std::optional<std::string> last_fenced_block(std::string_view text) {
  auto spans = fence_spans(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    if (it->info == "lean" || it->info == "lean4") return it->content;
  }
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    if (it->info.empty()) return it->content;
  }
  return std::nullopt;
}

std::string extract_code_block(std::string_view response) {
  for (std::string_view tag : {"answer", "output"}) {
    if (auto section = tagged_section(response, tag)) {
      if (auto block = last_fenced_block(*section)) return util::trim(*block);
    }
  }
  if (auto block = last_fenced_block(response)) return util::trim(*block);
  throw Error(ErrorKind::extraction, "response contained no Lean code block", std::string(response));
}

}  // namespace proofforge::modelgw
