#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "proofforge/error.hpp"
#include "proofforge/evalmetrics.hpp"
#include "proofforge/lean_lexer.hpp"
#include "decl.hpp"

namespace proofforge::evalmetrics {

using leanrun::TokKind;
using leanrun::Token;

std::size_t OpTree::size() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.size();
  return n;
}

std::string OpTree::to_sexpr() const {
  if (children.empty()) return label;
  std::string out = "(" + label;
  for (const auto& c : children) out += " " + c.to_sexpr();
  return out + ")";
}

OpTree parse_sexpr(std::string_view text) {
  std::size_t i = 0;
  auto skip = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\n' || text[i] == '\t')) ++i;
  };
  auto atom = [&] {
    std::size_t start = i;
    while (i < text.size() && text[i] != ' ' && text[i] != '(' && text[i] != ')' && text[i] != '\n') ++i;
    if (start == i) throw Error(ErrorKind::parse, "expected a label at offset " + std::to_string(start));
    return std::string(text.substr(start, i - start));
  };
  std::function<OpTree()> node = [&]() -> OpTree {
    skip();
    if (i < text.size() && text[i] == '(') {
      ++i;
      skip();
      OpTree t(atom());
      for (;;) {
        skip();
        if (i >= text.size()) throw Error(ErrorKind::parse, "unclosed '(' in s-expression");
        if (text[i] == ')') {
          ++i;
          return t;
        }
        t.children.push_back(node());
      }
    }
    return OpTree(atom());
  };
  OpTree t = node();
  skip();
  if (i != text.size()) throw Error(ErrorKind::parse, "trailing text in s-expression");
  return t;
}

namespace {

const std::map<std::string, std::string> kOpenClose = {
    {"(", ")"}, {"[", "]"}, {"{", "}"}, {"⟨", "⟩"}, {"⦃", "⦄"}, {"⌊", "⌋"}, {"⌈", "⌉"}};

bool is_close(const Token& t) {
  return t.is(")") || t.is("]") || t.is("}") || t.is("⟩") || t.is("⦄") || t.is("⌋") || t.is("⌉") ||
         t.is("⌋₊") || t.is("⌉₊");
}

bool closes_match(const std::string& open, const Token& close) {
  auto want = kOpenClose.at(open);
  return close.text == want || close.text == want + "₊";
}

std::string where(const Token& t) {
  return "line " + std::to_string(t.line) + ", col " + std::to_string(t.col);
}

struct Infix {
  int lbp;
  bool right;
  std::string label;
};

const std::map<std::string, Infix>& infix_table() {
  static const std::map<std::string, Infix> table = [] {
    std::map<std::string, Infix> m;
    auto add = [&](std::initializer_list<const char*> ops, int lbp, bool right, const char* label = nullptr) {
      for (auto op : ops) m[op] = {lbp, right, label ? label : op};
    };
    add({"<|", "$"}, 10, true, "app");
    add({"|>"}, 10, false, "app");
    add({"↔"}, 20, false);
    add({"<->"}, 20, false, "↔");
    add({"→"}, 25, true);
    add({"->"}, 25, true, "→");
    add({"∨"}, 30, true);
    add({"∧"}, 35, true);
    add({"×"}, 35, true);
    add({"=", "≠", "<", ">", "≤", "≥", "∈", "∉", "⊆", "⊂", "⊇", "⊃", "∣", "≡", "≃", "≅", "∥", "⟂", "==", "≈"},
        50, false);
    add({"!="}, 50, false, "≠");
    add({"<="}, 50, false, "≤");
    add({">="}, 50, false, "≥");
    add({"+", "-", "∪", "++"}, 65, false);
    add({"::"}, 67, true);
    add({"*", "/", "%", "∩", "\\", "⊗"}, 70, false);
    add({"•"}, 73, true);
    add({"^"}, 75, true);
    add({"∘"}, 90, true);
    return m;
  }();
  return table;
}

const std::set<std::string> kBinderOps = {"∀", "∃", "∃!", "fun", "λ", "∑", "∏", "⋃", "⋂", "Π", "Σ"};
const std::set<std::string> kBinderPreds = {"∈", "∉", ">", "<", "≥", "≤", "≠", "⊆", "⊂", "⊇", "⊃", ">=", "<=", "in"};
const std::set<std::string> kStop = {",", ":=", "|", ":", "=>", "↦", "then", "else", "with", "where", "in"};

constexpr int kMaxPrec = 1024;

struct BinderGroup {
  std::vector<std::string> names;  // empty for anonymous instance binders
  std::optional<OpTree> info;      // type, or predicate over the bound name
  std::string pred_op;
  std::optional<OpTree> pred_rhs;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, std::size_t begin, std::size_t end)
      : t_(std::move(toks)), pos_(begin), end_(end) {}

  std::size_t pos() const { return pos_; }

  OpTree theorem(std::size_t colon) {
    // binders run up to the colon; the statement follows it
    auto groups = binders(colon);
    pos_ = colon + 1;
    OpTree body = expr(0);
    while (pos_ < end_) {
      // leftovers: join them under the token that stopped us
      std::string label = t_[pos_++].text;
      OpTree rest = pos_ < end_ ? expr(0) : OpTree("_");
      body = OpTree(label, {std::move(body), std::move(rest)});
    }
    return close_binders("∀", groups, std::move(body));
  }

 private:
  const Token* peek(std::size_t k = 0) const { return pos_ + k < end_ ? &t_[pos_ + k] : nullptr; }
  bool at(std::string_view s) const { return peek() && peek()->is(s); }
  const Token& take() { return t_[pos_++]; }
  bool accept(std::string_view s) {
    if (at(s)) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string resolve(const std::string& name) const {
    // h.1 and x.foo keep their projection on the placeholder
    std::string base = name, suffix;
    auto first_dot = name.find('.');
    if (first_dot != std::string::npos) {
      base = name.substr(0, first_dot);
      suffix = name.substr(first_dot);
    }
    for (std::size_t i = env_.size(); i-- > 0;) {
      if (env_[i] == name) return "_" + std::to_string(i);
      if (!suffix.empty() && env_[i] == base) return "_" + std::to_string(i) + suffix;
    }
    return name;
  }

  bool is_plain_ident(const Token* t) const {
    if (!t || t->kind != TokKind::ident) return false;
    static const std::set<std::string> kw = {"fun", "λ", "if", "then", "else", "with", "where", "in",
                                             "theorem", "lemma", "example", "by", "at", "do", "let", "have"};
    return !kw.count(t->text);
  }

  bool arg_start(const Token* t) const {
    if (!t) return false;
    if (t->kind == TokKind::number || t->kind == TokKind::string) return true;
    if (is_plain_ident(t)) return true;
    return t->is("(") || t->is("⟨") || t->is("⌊") || t->is("⌈") || t->is("↑") || t->is("·") ||
           t->is("{") || t->is("Type*") || t->is("Sort*");
  }

  std::vector<BinderGroup> binders(std::size_t limit) {
    std::vector<BinderGroup> groups;
    auto saved_end = end_;
    end_ = limit;
    while (peek()) {
      const Token& t = *peek();
      if (t.is("(") || t.is("{") || t.is("⦃") || t.is("[") || t.is("⟨")) {
        std::string open = t.text;
        std::string close = kOpenClose.count(open) ? kOpenClose.at(open) : "⦄";
        ++pos_;
        // named iff a ':' appears at depth 0 before the closing bracket
        bool named = false;
        int depth = 0;
        for (std::size_t k = pos_; k < end_; ++k) {
          if (kOpenClose.count(t_[k].text)) ++depth;
          else if (is_close(t_[k])) {
            if (depth == 0) break;
            --depth;
          } else if (depth == 0 && t_[k].is(":")) {
            named = true;
            break;
          }
        }
        BinderGroup g;
        if (named || open != "[") {
          while (peek() && (is_plain_ident(peek()) || at("_")) && !at(close)) g.names.push_back(take().text);
          if (accept(":")) {
            g.info = expr(0);
          }
        } else {
          g.info = expr(0);
        }
        // default values `(x : ℕ := 3)` are dropped
        if (accept(":=")) expr(0);
        while (peek() && !at(close)) ++pos_;
        accept(close);
        bind(g);
        groups.push_back(std::move(g));
      } else if (is_plain_ident(&t) || t.is("_")) {
        BinderGroup g;
        while (peek() && (is_plain_ident(peek()) || at("_"))) g.names.push_back(take().text);
        if (accept(":")) {
          g.info = expr(0);
        } else if (peek() && kBinderPreds.count(peek()->text)) {
          g.pred_op = take().text;
          if (g.pred_op == ">=") g.pred_op = "≥";
          if (g.pred_op == "<=") g.pred_op = "≤";
          if (g.pred_op == "in") g.pred_op = "∈";
          g.pred_rhs = expr(51);
        }
        bind(g);
        groups.push_back(std::move(g));
      } else {
        break;
      }
    }
    end_ = saved_end;
    return groups;
  }

  void bind(BinderGroup& g) {
    for (const auto& n : g.names) env_.push_back(n);
  }

  // Wraps body in one node per bound name (or per anonymous group) and
  // pops the names off the environment.
  OpTree close_binders(const std::string& q, const std::vector<BinderGroup>& groups, OpTree body) {
    std::size_t level = env_.size();
    for (auto g = groups.rbegin(); g != groups.rend(); ++g) {
      std::size_t count = std::max<std::size_t>(1, g->names.size());
      for (std::size_t k = 0; k < count; ++k) {
        OpTree info("_");
        if (g->info) {
          info = *g->info;
        } else if (g->pred_rhs) {
          std::size_t bound = level - 1;
          info = OpTree(g->pred_op, {OpTree("_" + std::to_string(bound)), *g->pred_rhs});
        }
        if (!g->names.empty()) --level;
        body = OpTree(q, {std::move(info), std::move(body)});
      }
    }
    env_.resize(level);
    return body;
  }

  OpTree binder_expr(std::string q) {
    if (q == "λ") q = "fun";
    auto groups = binders(end_);
    if (!accept(",") && !accept("=>")) accept("↦");
    // big operators take their body at precedence 67
    bool big = q == "∑" || q == "∏" || q == "⋃" || q == "⋂";
    OpTree body = expr(big ? 67 : 0);
    return close_binders(q, groups, std::move(body));
  }

  OpTree group(const std::string& open) {
    std::string close = kOpenClose.at(open);
    std::vector<OpTree> items;
    std::optional<OpTree> ascribed;
    if (accept(close)) return OpTree(open == "(" ? "unit" : open + close);
    items.push_back(expr(0));
    while (peek() && !is_close(*peek())) {
      if (accept(",")) {
        items.push_back(expr(0));
      } else if (open == "(" && accept(":")) {
        ascribed = expr(0);
      } else {
        // unexpected separator inside the group: keep it as an atom
        items.push_back(OpTree(take().text));
      }
    }
    std::string closer = peek() ? take().text : close;
    if (open == "(") {
      if (ascribed) return OpTree(":", {std::move(items.front()), std::move(*ascribed)});
      if (items.size() == 1) return std::move(items.front());
      return OpTree("tuple", std::move(items));
    }
    if (open == "⌊" || open == "⌈") return OpTree(open + closer, std::move(items));
    if (open == "[") return OpTree("list", std::move(items));
    return OpTree("⟨⟩", std::move(items));
  }

  OpTree braces() {
    if (accept("}")) return OpTree("set");
    // set-builder: {x | p}, {x : T | p}, {(x, y) | p}
    std::size_t save = pos_;
    std::size_t mark = env_.size();
    if (is_plain_ident(peek())) {
      BinderGroup g;
      g.names.push_back(take().text);
      if (accept(":")) g.info = expr(0);
      if (accept("|")) {
        bind(g);
        OpTree body = expr(0);
        accept("}");
        return close_binders("setOf", {g}, std::move(body));
      }
      pos_ = save;
      env_.resize(mark);
    }
    std::vector<OpTree> items;
    items.push_back(expr(0));
    if (accept("|")) {
      OpTree body = expr(0);
      accept("}");
      return OpTree("setOf", {std::move(items.front()), std::move(body)});
    }
    while (accept(",")) items.push_back(expr(0));
    while (peek() && !at("}")) ++pos_;
    accept("}");
    return OpTree("set", std::move(items));
  }

  OpTree postfix(OpTree e) {
    while (at("⁻¹")) {
      e = OpTree(take().text, {std::move(e)});
    }
    return e;
  }

  // A term that can appear as a function argument.
  OpTree argument() {
    const Token& t = take();
    if (t.kind == TokKind::number || t.kind == TokKind::string) return postfix(OpTree(t.text));
    if (t.kind == TokKind::ident) {
      std::string name = t.text;
      if (name.size() > 1 && name.front() == '@') name.erase(0, 1);
      return postfix(OpTree(resolve(name)));
    }
    if (t.is("↑")) return OpTree("↑", {argument()});
    if (t.is("{")) return postfix(braces());
    if (kOpenClose.count(t.text)) return postfix(group(t.text));
    return OpTree(t.text);
  }

  OpTree nud() {
    const Token* t = peek();
    if (!t) return OpTree("_");
    if (kBinderOps.count(t->text)) {
      std::string q = take().text;
      return binder_expr(q);
    }
    if (t->is("¬")) {
      ++pos_;
      return OpTree("¬", {expr(40)});
    }
    if (t->is("-")) {
      ++pos_;
      return OpTree("neg", {expr(75)});
    }
    if (t->is("|")) {
      ++pos_;
      OpTree inner = expr(0);
      accept("|");
      return OpTree("abs", {std::move(inner)});
    }
    if (t->is("if")) {
      ++pos_;
      std::size_t mark = env_.size();
      if (is_plain_ident(peek()) && peek(1) && peek(1)->is(":")) {
        env_.push_back(take().text);
        ++pos_;
      }
      OpTree c = expr(0);
      accept("then");
      OpTree a = expr(0);
      accept("else");
      OpTree b = expr(0);
      env_.resize(mark);
      return OpTree("ite", {std::move(c), std::move(a), std::move(b)});
    }
    if (t->kind == TokKind::ident || kOpenClose.count(t->text) || t->is("↑")) {
      OpTree head = argument();
      std::vector<OpTree> args;
      while (arg_start(peek())) args.push_back(argument());
      // a trailing lambda is the last argument: `Finset.sum s fun i => f i`
      if (at("fun") || at("λ")) args.push_back(nud());
      if (args.empty()) return head;
      if (head.children.empty()) {
        head.children = std::move(args);
        return head;
      }
      args.insert(args.begin(), std::move(head));
      return OpTree("app", std::move(args));
    }
    if (t->kind == TokKind::number || t->kind == TokKind::string) return argument();
    if (is_close(*t) || kStop.count(t->text)) return OpTree("_");
    // unknown notation is an atom
    return OpTree(take().text);
  }

  OpTree expr(int rbp) {
    OpTree left = nud();
    for (;;) {
      const Token* t = peek();
      if (!t || is_close(*t) || kStop.count(t->text)) break;
      if (t->is("!")) {
        ++pos_;
        left = OpTree("!", {std::move(left)});
        continue;
      }
      if (t->is("⁻¹")) {
        ++pos_;
        left = OpTree("⁻¹", {std::move(left)});
        continue;
      }
      auto it = infix_table().find(t->text);
      if (it != infix_table().end()) {
        const Infix& op = it->second;
        if (op.lbp <= rbp) break;
        ++pos_;
        OpTree right = expr(op.right ? op.lbp - 1 : op.lbp);
        if (op.label == "≡" && at("[")) {
          // a ≡ b [MOD n]
          ++pos_;
          OpTree modulus = group("[");
          if (modulus.children.size() == 1) modulus = std::move(modulus.children.front());
          left = OpTree("≡", {std::move(left), std::move(right), std::move(modulus)});
        } else if (op.label == "app") {
          left = OpTree("app", {std::move(left), std::move(right)});
        } else {
          left = OpTree(op.label, {std::move(left), std::move(right)});
        }
        continue;
      }
      if (arg_start(t) && rbp < kMaxPrec) {
        // application of a non-identifier head, e.g. (f ∘ g) x
        std::vector<OpTree> args{std::move(left)};
        while (arg_start(peek())) args.push_back(argument());
        if (at("fun") || at("λ")) args.push_back(nud());
        left = OpTree("app", std::move(args));
        continue;
      }
      if (t->kind == TokKind::symbol && rbp < 50) {
        // unknown infix symbol
        std::string label = take().text;
        OpTree right = expr(50);
        left = OpTree(label, {std::move(left), std::move(right)});
        continue;
      }
      break;
    }
    return left;
  }

  std::vector<Token> t_;
  std::size_t pos_;
  std::size_t end_;
  std::vector<std::string> env_;
};

}  // namespace

namespace detail {

DeclSpan find_decl(const std::vector<Token>& toks) {
  std::size_t decl = toks.size();
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is("theorem") || toks[i].is("lemma") || toks[i].is("example")) {
      decl = i;
      break;
    }
  }
  if (decl == toks.size()) throw Error(ErrorKind::parse, "no theorem, lemma or example declaration found");
  std::size_t start = decl + 1;
  if (!toks[decl].is("example") && start < toks.size() && toks[start].kind == TokKind::ident) ++start;

  // Find the statement colon and the proof delimiter, checking delimiters.
  std::vector<const Token*> stack;
  std::optional<std::size_t> colon;
  std::size_t end = toks.size();
  for (std::size_t i = start; i < toks.size(); ++i) {
    const Token& t = toks[i];
    if (kOpenClose.count(t.text)) {
      stack.push_back(&t);
    } else if (is_close(t)) {
      if (stack.empty()) throw Error(ErrorKind::parse, "unbalanced '" + t.text + "' at " + where(t));
      if (!closes_match(stack.back()->text, t)) {
        throw Error(ErrorKind::parse, "'" + t.text + "' at " + where(t) + " does not close '" +
                                          stack.back()->text + "' at " + where(*stack.back()));
      }
      stack.pop_back();
    } else if (stack.empty() && t.is(":") && !colon) {
      colon = i;
    } else if (stack.empty() && (t.is(":=") || t.is("where"))) {
      end = i;
      break;
    }
  }
  if (!stack.empty()) {
    throw Error(ErrorKind::parse, "unclosed '" + stack.back()->text + "' at " + where(*stack.back()));
  }
  if (!colon) throw Error(ErrorKind::parse, "declaration has no statement type");
  return {decl, start, *colon, end};
}

}  // namespace detail

OpTree parse_optree(std::string_view theorem_code) {
  auto toks = leanrun::lex(theorem_code);
  auto span = detail::find_decl(toks);
  Parser p(std::move(toks), span.start, span.end);
  return p.theorem(span.colon);
}

}  // namespace proofforge::evalmetrics
