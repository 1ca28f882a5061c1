#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rldet {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double total_cost = 0.0;
};

// Minimum-cost assignment for an m x n cost matrix of finite nonnegative
// entries. Rectangular inputs are padded to square with a constant; pairs
// involving padding are dropped, so exactly min(m, n) pairs come back.
// O(n^3) shortest augmenting paths with potentials.
inline Assignment hungarian(const std::vector<std::vector<double>>& cost) {
  const int m = static_cast<int>(cost.size());
  if (m == 0) return {};
  const int n = static_cast<int>(cost[0].size());
  if (n == 0) return {};
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("hungarian: ragged cost matrix");
    for (double c : row)
      if (!std::isfinite(c) || c < 0.0)
        throw std::invalid_argument("hungarian: costs must be finite and nonnegative");
  }

  const int N = std::max(m, n);
  auto at = [&](int i, int j) -> double { return (i < m && j < n) ? cost[i][j] : 0.0; };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(N + 1, 0.0), v(N + 1, 0.0);
  std::vector<int> match(N + 1, 0);  // match[j] = row assigned to column j (1-based)
  std::vector<int> way(N + 1, 0);

  for (int i = 1; i <= N; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(N + 1, inf);
    std::vector<char> used(N + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= N; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= N; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  Assignment out;
  for (int j = 1; j <= N; ++j) {
    const int i = match[j] - 1;
    if (i < m && j - 1 < n) out.pairs.emplace_back(i, j - 1);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (auto [i, j] : out.pairs) out.total_cost += cost[i][j];
  return out;
}

}  // namespace rldet
