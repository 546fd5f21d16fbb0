// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "dsdet/assignment/hungarian.hpp"
#include "dsdet/assignment/matching.hpp"
#include "dsdet/numerics/nn.hpp"

namespace {

namespace a = dsdet::assignment;
using dsdet::geometry::Matrix;

// Minimum over all injective row -> column maps (rows <= cols).
double brute_force(const Matrix& c) {
  std::vector<int> cols(c.cols);
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // Enumerate permutations of the columns; the first `rows` entries are the choice.
  do {
    double s = 0;
    for (int r = 0; r < c.rows; ++r) s += c(r, cols[r]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

Matrix random_matrix(dsdet::numerics::Rng& rng, int r, int c, bool integer) {
  Matrix m(r, c);
  for (auto& v : m.data) v = integer ? static_cast<double>(rng.below(5)) : rng.uniform(-3, 7);
  return m;
}

TEST(Hungarian, SquareMatchesBruteForce) {
  dsdet::numerics::Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = 1 + trial % 7;
    const auto c = random_matrix(rng, m, m, trial % 3 == 0);
    const auto r = a::hungarian(c);
    EXPECT_NEAR(r.total_cost, brute_force(c), 1e-9) << "m=" << m;
    ASSERT_EQ(static_cast<int>(r.pairs.size()), m);
    double s = 0;
    std::set<int> cols;
    for (const auto& p : r.pairs) {
      s += c(p.slot, p.query);
      cols.insert(p.query);
    }
    EXPECT_NEAR(s, r.total_cost, 1e-9);
    EXPECT_EQ(static_cast<int>(cols.size()), m);
  }
}

TEST(Hungarian, RectangularBothOrientations) {
  dsdet::numerics::Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int r = 1 + static_cast<int>(rng.below(5));
    const int c = r + static_cast<int>(rng.below(3));
    const auto wide = random_matrix(rng, r, c, false);
    const auto res = a::hungarian(wide);
    EXPECT_NEAR(res.total_cost, brute_force(wide), 1e-9);
    EXPECT_EQ(static_cast<int>(res.unmatched_queries.size()), c - r);
    // Tall: only `c` rows can be assigned; the optimum equals the transposed problem.
    const auto tall = wide.transposed();
    EXPECT_NEAR(a::hungarian(tall).total_cost, brute_force(wide), 1e-9);
  }
}

TEST(Hungarian, RejectsNonFinite) {
  Matrix m(2, 2, 1.0);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(a::hungarian(m), std::invalid_argument);
}

TEST(Matching, EffectiveReplication) {
  EXPECT_EQ(a::effective_replication(6, 100, 3), 6);
  EXPECT_EQ(a::effective_replication(6, 10, 3), 3);
  EXPECT_EQ(a::effective_replication(6, 2, 3), 1);
  EXPECT_EQ(a::effective_replication(6, 10, 0), 6);
}

TEST(Matching, OneToManyGivesEachGtKDistinctQueries) {
  dsdet::numerics::Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 6 + static_cast<int>(rng.below(20));
    const int ng = 1 + static_cast<int>(rng.below(4));
    const int k = 1 + static_cast<int>(rng.below(6));
    const auto cost = random_matrix(rng, n, ng, false);
    const auto res = a::match_one_to_many(cost, k);
    const int ke = a::effective_replication(k, n, ng);
    ASSERT_EQ(res.replication, ke);
    ASSERT_EQ(static_cast<int>(res.pairs.size()), ng * ke);
    std::vector<int> per_gt(ng, 0);
    std::set<int> queries;
    for (const auto& p : res.pairs) {
      ++per_gt[p.gt];
      queries.insert(p.query);
      EXPECT_DOUBLE_EQ(p.cost, cost(p.query, p.gt));
    }
    for (int v : per_gt) EXPECT_EQ(v, ke);
    EXPECT_EQ(static_cast<int>(queries.size()), ng * ke);
    EXPECT_EQ(static_cast<int>(res.unmatched_queries.size()), n - ng * ke);
  }
}

TEST(Matching, OneToManyOptimalOnSmallInstances) {
  dsdet::numerics::Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 4 + static_cast<int>(rng.below(3));
    const int ng = 1 + static_cast<int>(rng.below(2));
    const auto cost = random_matrix(rng, n, ng, trial % 2 == 0);
    const auto res = a::match_one_to_many(cost, 2);
    const int ke = res.replication;
    Matrix slots(ng * ke, n);
    for (int g = 0; g < ng; ++g)
      for (int r = 0; r < ke; ++r)
        for (int q = 0; q < n; ++q) slots(g * ke + r, q) = cost(q, g);
    EXPECT_NEAR(res.total_cost, brute_force(slots), 1e-9);
  }
}

TEST(Matching, PlaceholdersNeverMatched) {
  dsdet::numerics::Rng rng(6);
  const auto cost = random_matrix(rng, 8, 2, false);
  const std::vector<unsigned char> active{1, 0, 1, 1, 0, 1, 1, 1};
  const auto res = a::match_one_to_many(cost, 6, active);
  EXPECT_EQ(res.replication, 3);
  for (const auto& p : res.pairs) EXPECT_TRUE(active[p.query]);
  for (int q : res.unmatched_queries) EXPECT_TRUE(active[q]);
  const auto one = a::match_one_to_one(cost, active);
  EXPECT_EQ(one.pairs.size(), 2u);
  const std::vector<unsigned char> none(8, 0);
  EXPECT_THROW(a::match_one_to_many(cost, 2, none), std::invalid_argument);
}

TEST(Matching, CostEntryFormula) {
  const std::vector<double> logits{0.3, -1.2, 2.0, 0.5};
  const std::vector<dsdet::geometry::BoxCxCyWH> boxes{{0.4, 0.5, 0.2, 0.3}, {0.7, 0.2, 0.1, 0.1}};
  a::PredictionView view{2, logits, boxes, {}};
  a::GroundTruth gts;
  gts.classes = {1, 0};
  gts.boxes = {{0.45, 0.5, 0.2, 0.25}, {0.7, 0.25, 0.15, 0.1}};
  const a::CostWeights w{2.0, 5.0, 3.0};
  const auto cost = a::build_match_cost(view, gts, w);
  for (int q = 0; q < 2; ++q)
    for (int g = 0; g < 2; ++g) {
      const double x = logits[q * 2 + gts.classes[g]];
      const double expect = 2.0 * std::log1p(std::exp(-x)) + 5.0 * dsdet::geometry::l1_distance(boxes[q], gts.boxes[g]) -
                            3.0 * dsdet::geometry::giou(boxes[q], gts.boxes[g]);
      EXPECT_NEAR(cost(q, g), expect, 1e-12);
    }
}

TEST(Matching, NoGroundTruthLeavesAllUnmatched) {
  Matrix cost(5, 0);
  const auto res = a::match_one_to_many(cost, 6);
  EXPECT_TRUE(res.pairs.empty());
  EXPECT_EQ(res.unmatched_queries.size(), 5u);
}

}  // namespace
