#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace proofforge::leanrun {

enum class TokKind { ident, number, string, symbol };

struct Token {
  TokKind kind;
  std::string text;
  std::size_t offset = 0;  // byte offset into the source
  int line = 1;
  int col = 0;  // 0-based, in codepoints

  bool is(std::string_view s) const { return text == s; }
};

/// Tokenizes Lean 4 source well enough for statement comparison and tree
/// building. Comments are dropped (nested block comments included); string
/// literals are kept as single tokens. Never throws: an unterminated comment
/// or string simply runs to the end of the input.
std::vector<Token> lex(std::string_view src);

/// Source with comments removed (string contents kept intact).
std::string strip_comments(std::string_view src);

/// True when `sorry` occurs as a token outside comments and strings.
bool mentions_sorry(std::string_view src);

/// Decode one UTF-8 codepoint at s[i]; advances i. Malformed bytes decode as
/// themselves (one byte each).
char32_t next_codepoint(std::string_view s, std::size_t& i);

bool is_ident_start(char32_t c);
bool is_ident_rest(char32_t c);

}  // namespace proofforge::leanrun
