#pragma once

#include <vector>

#include "proofforge/lean_lexer.hpp"

namespace proofforge::evalmetrics::detail {

// Token positions of the first theorem/lemma/example declaration.
struct DeclSpan {
  std::size_t decl = 0;   // the keyword
  std::size_t start = 0;  // first binder token (after the name)
  std::size_t colon = 0;  // statement colon
  std::size_t end = 0;    // `:=`/`where`, or toks.size()
};

// Throws Error(parse) when there is no declaration or delimiters are unbalanced.
DeclSpan find_decl(const std::vector<leanrun::Token>& toks);

}  // namespace proofforge::evalmetrics::detail
