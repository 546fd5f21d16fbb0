// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dsdet/geometry/box.hpp"

namespace dsdet::assignment {

using geometry::Matrix;

struct MatchPair {
  int slot = 0;   // row of the (possibly replicated) target matrix
  int query = 0;  // prediction index
  int gt = 0;     // original ground-truth index (slot / replication factor)
  double cost = 0.0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_queries;
  double total_cost = 0.0;
  int replication = 1;
};

// Minimum-cost assignment of every row of an m x n cost matrix to a distinct
// column (shortest augmenting paths with potentials, O(m^2 n)). When m > n the
// problem is solved on the transpose, so only n rows end up assigned.
// Pairs carry slot = row, query = column, gt = row; unmatched_queries lists
// unassigned columns. Throws std::invalid_argument on non-finite entries.
MatchResult hungarian(const Matrix& cost);

}  // namespace dsdet::assignment
