#include <algorithm>

#include "proofforge/evalmetrics.hpp"

namespace proofforge::evalmetrics {

namespace {

struct Flat {
  std::vector<const std::string*> label;  // postorder
  std::vector<int> lml;                   // leftmost leaf descendant, postorder index
  std::vector<int> keyroots;
};

int flatten(const OpTree& t, Flat& f) {
  int first = -1;
  for (const auto& c : t.children) {
    int l = flatten(c, f);
    if (first < 0) first = l;
  }
  int idx = static_cast<int>(f.label.size());
  f.label.push_back(&t.label);
  f.lml.push_back(first < 0 ? idx : first);
  return f.lml.back();
}

Flat make_flat(const OpTree& t) {
  Flat f;
  flatten(t, f);
  int n = static_cast<int>(f.label.size());
  std::vector<bool> seen(n, false);
  for (int i = n - 1; i >= 0; --i) {
    if (!seen[f.lml[i]]) {
      seen[f.lml[i]] = true;
      f.keyroots.push_back(i);
    }
  }
  std::sort(f.keyroots.begin(), f.keyroots.end());
  return f;
}

}  // namespace

int ted(const OpTree& a, const OpTree& b) {
  Flat fa = make_flat(a), fb = make_flat(b);
  int n = static_cast<int>(fa.label.size()), m = static_cast<int>(fb.label.size());
  std::vector<std::vector<int>> td(n, std::vector<int>(m, 0));
  std::vector<std::vector<int>> fd(n + 1, std::vector<int>(m + 1, 0));

  for (int i : fa.keyroots) {
    for (int j : fb.keyroots) {
      int li = fa.lml[i], lj = fb.lml[j];
      // fd[x][y]: forest li..li+x-1 against lj..lj+y-1
      fd[0][0] = 0;
      for (int x = 1; x <= i - li + 1; ++x) fd[x][0] = fd[x - 1][0] + 1;
      for (int y = 1; y <= j - lj + 1; ++y) fd[0][y] = fd[0][y - 1] + 1;
      for (int x = 1; x <= i - li + 1; ++x) {
        for (int y = 1; y <= j - lj + 1; ++y) {
          int ni = li + x - 1, nj = lj + y - 1;
          int del = fd[x - 1][y] + 1;
          int ins = fd[x][y - 1] + 1;
          if (fa.lml[ni] == li && fb.lml[nj] == lj) {
            int rel = fd[x - 1][y - 1] + (*fa.label[ni] == *fb.label[nj] ? 0 : 1);
            fd[x][y] = std::min({del, ins, rel});
            td[ni][nj] = fd[x][y];
          } else {
            int sub = fd[fa.lml[ni] - li][fb.lml[nj] - lj] + td[ni][nj];
            fd[x][y] = std::min({del, ins, sub});
          }
        }
      }
    }
  }
  return td[n - 1][m - 1];
}

GtedResult gted_similarity(const OpTree& a, const OpTree& b, Normalization norm) {
  GtedResult r;
  r.ted_cost = ted(a, b);
  r.size_a = a.size();
  r.size_b = b.size();
  double denom = norm == Normalization::sum ? static_cast<double>(r.size_a + r.size_b)
                                            : static_cast<double>(std::max(r.size_a, r.size_b));
  r.similarity = std::clamp(1.0 - r.ted_cost / denom, 0.0, 1.0);
  return r;
}

}  // namespace proofforge::evalmetrics
