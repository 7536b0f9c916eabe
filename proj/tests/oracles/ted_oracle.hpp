#pragma once

// Exhaustive edit-distance search over small ordered forests. Independent of
// the library's dynamic program: it enumerates single edit operations
// (relabel, delete with splice, insert over a run of siblings) and runs a
// breadth-first search, so every distance it reports is witnessed by an
// explicit script.

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "proofforge/evalmetrics.hpp"

namespace oracle {

using proofforge::evalmetrics::OpTree;
using Forest = std::vector<OpTree>;

inline std::size_t forest_size(const Forest& f) {
  std::size_t n = 0;
  for (const auto& t : f) n += t.size();
  return n;
}

inline std::string key(const Forest& f) {
  std::string s = "[";
  for (const auto& t : f) s += t.to_sexpr() + ";";
  return s + "]";
}

// Every forest one edit away from f.
inline void neighbors(const Forest& f, const std::vector<std::string>& alphabet, std::vector<Forest>& out) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (const auto& l : alphabet) {
      if (l == f[i].label) continue;
      Forest g = f;
      g[i].label = l;
      out.push_back(std::move(g));
    }
    Forest del(f.begin(), f.begin() + i);
    del.insert(del.end(), f[i].children.begin(), f[i].children.end());
    del.insert(del.end(), f.begin() + i + 1, f.end());
    out.push_back(std::move(del));

    std::vector<Forest> inner;
    neighbors(f[i].children, alphabet, inner);
    for (auto& c : inner) {
      Forest g = f;
      g[i].children = std::move(c);
      out.push_back(std::move(g));
    }
  }
  for (std::size_t lo = 0; lo <= f.size(); ++lo) {
    for (std::size_t hi = lo; hi <= f.size(); ++hi) {
      for (const auto& l : alphabet) {
        OpTree parent(l, Forest(f.begin() + lo, f.begin() + hi));
        Forest g(f.begin(), f.begin() + lo);
        g.push_back(std::move(parent));
        g.insert(g.end(), f.begin() + hi, f.end());
        out.push_back(std::move(g));
      }
    }
  }
}

// Distances from `src` to every forest of at most `max_nodes` nodes.
inline std::unordered_map<std::string, int> bfs(const OpTree& src, const std::vector<std::string>& alphabet,
                                                std::size_t max_nodes) {
  std::unordered_map<std::string, int> dist;
  std::deque<Forest> q;
  Forest start{src};
  dist[key(start)] = 0;
  q.push_back(start);
  std::vector<Forest> next;
  while (!q.empty()) {
    Forest f = std::move(q.front());
    q.pop_front();
    int d = dist[key(f)];
    next.clear();
    neighbors(f, alphabet, next);
    for (auto& g : next) {
      if (forest_size(g) > max_nodes) continue;
      auto k = key(g);
      if (dist.emplace(k, d + 1).second) q.push_back(std::move(g));
    }
  }
  return dist;
}

// All ordered trees with exactly n nodes over the alphabet.
inline std::vector<OpTree> trees_of_size(std::size_t n, const std::vector<std::string>& alphabet);

inline std::vector<Forest> forests_of_size(std::size_t n, const std::vector<std::string>& alphabet) {
  if (n == 0) return {Forest{}};
  std::vector<Forest> out;
  for (std::size_t first = 1; first <= n; ++first) {
    for (const auto& t : trees_of_size(first, alphabet)) {
      for (auto& rest : forests_of_size(n - first, alphabet)) {
        Forest f{t};
        f.insert(f.end(), rest.begin(), rest.end());
        out.push_back(std::move(f));
      }
    }
  }
  return out;
}

inline std::vector<OpTree> trees_of_size(std::size_t n, const std::vector<std::string>& alphabet) {
  std::vector<OpTree> out;
  if (n == 0) return out;
  for (const auto& l : alphabet) {
    for (auto& kids : forests_of_size(n - 1, alphabet)) out.emplace_back(l, std::move(kids));
  }
  return out;
}

inline std::vector<OpTree> trees_up_to(std::size_t n, const std::vector<std::string>& alphabet) {
  std::vector<OpTree> out;
  for (std::size_t k = 1; k <= n; ++k) {
    auto t = trees_of_size(k, alphabet);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

// Random tree with 1..max_nodes nodes: each new node attaches under a
// uniformly chosen existing node, appended as its last child.
inline OpTree random_tree(std::mt19937_64& rng, std::size_t max_nodes, const std::vector<std::string>& alphabet) {
  std::uniform_int_distribution<std::size_t> count(1, max_nodes);
  std::uniform_int_distribution<std::size_t> lab(0, alphabet.size() - 1);
  std::size_t n = count(rng);
  std::vector<std::vector<std::size_t>> kids(n);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    kids[parent(rng)].push_back(i);
  }
  std::vector<std::string> labels(n);
  for (auto& l : labels) l = alphabet[lab(rng)];
  std::function<OpTree(std::size_t)> build = [&](std::size_t i) {
    OpTree t(labels[i]);
    for (auto k : kids[i]) t.children.push_back(build(k));
    return t;
  };
  return build(0);
}

// Forest edit distance straight from the recursive definition on rightmost
// roots, memoized on forest keys. Exponential in the worst case but fine for
// trees of a dozen nodes.
class RecursiveTed {
 public:
  int operator()(const OpTree& a, const OpTree& b) { return dist(Forest{a}, Forest{b}); }

  int dist(const Forest& f, const Forest& g) {
    if (f.empty()) return static_cast<int>(forest_size(g));
    if (g.empty()) return static_cast<int>(forest_size(f));
    auto k = key(f) + "|" + key(g);
    if (auto it = memo_.find(k); it != memo_.end()) return it->second;

    const OpTree& v = f.back();
    const OpTree& w = g.back();
    Forest f_del(f.begin(), f.end() - 1);
    f_del.insert(f_del.end(), v.children.begin(), v.children.end());
    Forest g_del(g.begin(), g.end() - 1);
    g_del.insert(g_del.end(), w.children.begin(), w.children.end());
    Forest f_rest(f.begin(), f.end() - 1);
    Forest g_rest(g.begin(), g.end() - 1);

    int best = dist(f_del, g) + 1;
    best = std::min(best, dist(f, g_del) + 1);
    best = std::min(best, dist(v.children, w.children) + dist(f_rest, g_rest) + (v.label == w.label ? 0 : 1));
    memo_.emplace(std::move(k), best);
    return best;
  }

 private:
  std::unordered_map<std::string, int> memo_;
};

}  // namespace oracle
