#include "proofforge/lean_lexer.hpp"

#include <array>
#include <cctype>

namespace proofforge::leanrun {

char32_t next_codepoint(std::string_view s, std::size_t& i) {
  auto b0 = static_cast<unsigned char>(s[i]);
  int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
  if (len == 0 || i + len > s.size()) {
    ++i;
    return b0;
  }
  char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (int k = 1; k < len; ++k) {
    auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

namespace {

bool is_letter_like(char32_t c) {
  return (c >= 0x3B1 && c <= 0x3C9 && c != 0x3BB) ||                // greek lower, not λ
         (c >= 0x391 && c <= 0x3A9 && c != 0x3A0 && c != 0x3A3) ||  // greek upper, not Π Σ
         (c >= 0x3CA && c <= 0x3FB) ||                              // coptic
         (c >= 0x1F00 && c <= 0x1FFE) ||                            // polytonic greek
         (c >= 0x2100 && c <= 0x214F) ||                            // letterlike block: ℕ ℤ ℝ
         (c >= 0x1D49C && c <= 0x1D59F);                            // script letters
}

bool is_subscript_alnum(char32_t c) {
  return (c >= 0x2080 && c <= 0x2089) || (c >= 0x2090 && c <= 0x209C) ||
         (c >= 0x1D62 && c <= 0x1D6A);
}

bool is_ascii_alpha(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }

constexpr std::array<std::string_view, 21> kMultiOps = {
    "<->", "<;>", "<|>", "...", ":=", "=>", "->", "<-", "<=", ">=", "!=",
    "&&", "||", "::", "..", "++", "|>", "<|", "⁻¹", "==", "^^"};

}  // namespace

bool is_ident_start(char32_t c) { return is_ascii_alpha(c) || c == '_' || is_letter_like(c); }

bool is_ident_rest(char32_t c) {
  return is_ident_start(c) || is_digit(c) || c == '\'' || c == '!' || c == '?' ||
         is_subscript_alnum(c);
}

namespace {

class Lexer {
 public:
  explicit Lexer(std::string_view src) : s_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (i_ < s_.size()) {
      if (skip_trivia()) continue;
      Token t;
      t.offset = i_;
      t.line = line_;
      t.col = col_;
      scan(t);
      out.push_back(std::move(t));
    }
    return out;
  }

  // Copy of the input with comment bytes dropped.
  std::string without_comments() {
    std::string out;
    std::size_t last = 0;
    while (i_ < s_.size()) {
      std::size_t start = i_;
      if (at("--") || at("/-")) {
        out.append(s_.substr(last, start - last));
        skip_trivia();
        last = i_;
        continue;
      }
      if (s_[i_] == '"') {
        Token t;
        scan(t);
        continue;
      }
      advance();
    }
    out.append(s_.substr(last));
    return out;
  }

 private:
  bool at(std::string_view p) const { return s_.substr(i_, p.size()) == p; }

  char32_t peek_cp(std::size_t at) const {
    if (at >= s_.size()) return 0;
    return next_codepoint(s_, at);
  }

  char32_t advance() {
    char32_t c = next_codepoint(s_, i_);
    if (c == '\n') {
      ++line_;
      col_ = 0;
    } else {
      ++col_;
    }
    return c;
  }

  void advance_bytes(std::size_t n) {
    std::size_t end = i_ + n;
    while (i_ < end) advance();
  }

  bool skip_trivia() {
    if (at("--")) {
      while (i_ < s_.size() && s_[i_] != '\n') advance();
      return true;
    }
    if (at("/-")) {
      advance_bytes(2);
      int depth = 1;
      while (i_ < s_.size() && depth > 0) {
        if (at("/-")) {
          advance_bytes(2);
          ++depth;
        } else if (at("-/")) {
          advance_bytes(2);
          --depth;
        } else {
          advance();
        }
      }
      return true;
    }
    char c = s_[i_];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      advance();
      return true;
    }
    return false;
  }

  void scan(Token& t) {
    std::size_t start = i_;
    char32_t c = peek_cp(i_);

    if (c == '"') {
      t.kind = TokKind::string;
      advance();
      while (i_ < s_.size()) {
        char32_t d = advance();
        if (d == '\\' && i_ < s_.size()) {
          advance();
        } else if (d == '"') {
          break;
        }
      }
    } else if (c == U'«') {
      t.kind = TokKind::ident;
      while (i_ < s_.size() && advance() != U'»') {
      }
    } else if (is_digit(c)) {
      t.kind = TokKind::number;
      scan_number();
    } else if (c == '@' && is_ident_start(peek_cp(i_ + 1))) {
      t.kind = TokKind::ident;
      advance();
      scan_ident();
    } else if (is_ident_start(c)) {
      t.kind = TokKind::ident;
      scan_ident();
      std::string_view word = s_.substr(start, i_ - start);
      // `Type*`, `Sort*` and `ℕ+` are single notations in Mathlib.
      if ((word == "Type" || word == "Sort") && at("*")) {
        advance();
      } else if (word == "ℕ" && at("+")) {
        char32_t after = peek_cp(i_ + 1);
        if (!is_digit(after) && !is_ident_start(after) && after != '(') advance();
      }
    } else {
      t.kind = TokKind::symbol;
      if (at("⌋₊") || at("⌉₊")) {
        advance_bytes(std::string_view("⌋₊").size());
      } else {
        bool matched = false;
        for (auto op : kMultiOps) {
          if (at(op)) {
            advance_bytes(op.size());
            matched = true;
            break;
          }
        }
        if (!matched) advance();
      }
    }
    t.text = std::string(s_.substr(start, i_ - start));
  }

  void scan_number() {
    if (at("0x") || at("0b") || at("0o")) {
      advance_bytes(2);
      while (i_ < s_.size() && std::isxdigit(static_cast<unsigned char>(s_[i_]))) advance();
      return;
    }
    while (i_ < s_.size() && is_digit(static_cast<unsigned char>(s_[i_]))) advance();
    // 1.5 is a decimal, but `1..n` is a range
    if (i_ + 1 < s_.size() && s_[i_] == '.' && is_digit(static_cast<unsigned char>(s_[i_ + 1]))) {
      advance();
      while (i_ < s_.size() && is_digit(static_cast<unsigned char>(s_[i_]))) advance();
    }
  }

  void scan_ident() {
    advance();
    while (i_ < s_.size()) {
      std::size_t probe = i_;
      char32_t c = next_codepoint(s_, probe);
      if (is_ident_rest(c)) {
        advance();
      } else if (c == '.' && probe < s_.size()) {
        std::size_t after = probe;
        char32_t d = next_codepoint(s_, after);
        if (is_ident_start(d) || is_digit(d)) {
          advance();
        } else {
          break;
        }
      } else {
        break;
      }
    }
  }

  std::string_view s_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 0;
};

}  // namespace

std::vector<Token> lex(std::string_view src) { return Lexer(src).run(); }

std::string strip_comments(std::string_view src) { return Lexer(src).without_comments(); }

bool mentions_sorry(std::string_view src) {
  for (const auto& t : lex(src)) {
    if (t.kind == TokKind::ident && t.text == "sorry") return true;
  }
  return false;
}

}  // namespace proofforge::leanrun
