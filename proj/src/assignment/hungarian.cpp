// SPDX-License-Identifier: Apache-2.0

#include "dsdet/assignment/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dsdet::assignment {
namespace {

// Returns row_of_col[j] (or -1) for an m x n matrix with m <= n.
std::vector<int> solve_rows_le_cols(const Matrix& a) {
  const int m = a.rows;
  const int n = a.cols;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(m) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  std::vector<double> minv(static_cast<std::size_t>(n) + 1);
  std::vector<char> used(static_cast<std::size_t>(n) + 1);
  for (int i = 1; i <= m; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_of_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_of_col[j - 1] = p[j] - 1;
  return row_of_col;
}

}  // namespace

MatchResult hungarian(const Matrix& cost) {
  for (double c : cost.data)
    if (!std::isfinite(c)) throw std::invalid_argument("hungarian: non-finite cost entry");
  MatchResult result;
  if (cost.rows == 0 || cost.cols == 0) {
    for (int j = 0; j < cost.cols; ++j) result.unmatched_queries.push_back(j);
    return result;
  }
  if (cost.rows <= cost.cols) {
    const auto row_of_col = solve_rows_le_cols(cost);
    for (int j = 0; j < cost.cols; ++j) {
      if (row_of_col[j] >= 0) {
        result.pairs.push_back({row_of_col[j], j, row_of_col[j], cost(row_of_col[j], j)});
      } else {
        result.unmatched_queries.push_back(j);
      }
    }
  } else {
    // Each column gets a distinct row.
    const auto col_of_row = solve_rows_le_cols(cost.transposed());
    for (int i = 0; i < cost.rows; ++i)
      if (col_of_row[i] >= 0) result.pairs.push_back({i, col_of_row[i], i, cost(i, col_of_row[i])});
  }
  std::sort(result.pairs.begin(), result.pairs.end(), [](const MatchPair& a, const MatchPair& b) { return a.slot < b.slot; });
  for (const auto& pr : result.pairs) result.total_cost += pr.cost;
  return result;
}

}  // namespace dsdet::assignment
