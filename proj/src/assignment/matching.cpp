// SPDX-License-Identifier: Apache-2.0

#include "dsdet/assignment/matching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsdet::assignment {
namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Matrix build_match_cost(const PredictionView& preds, const GroundTruth& gts, const CostWeights& w) {
  const int n = preds.size();
  const int m = gts.size();
  if (static_cast<int>(preds.logits.size()) != n * preds.num_classes)
    throw std::invalid_argument("build_match_cost: logits do not match prediction count");
  if (static_cast<int>(gts.classes.size()) != m)
    throw std::invalid_argument("build_match_cost: ground-truth classes/boxes differ in length");
  Matrix cost(n, m);
  for (int q = 0; q < n; ++q) {
    const auto pq = preds.boxes[q].to_xyxy();
    for (int g = 0; g < m; ++g) {
      const int c = gts.classes[g];
      if (c < 0 || c >= preds.num_classes) throw std::invalid_argument("build_match_cost: class id out of range");
      // BCE of predicting class c with target 1.
      const double cls = softplus(-preds.logits[static_cast<std::size_t>(q) * preds.num_classes + c]);
      cost(q, g) = w.cls * cls + w.l1 * geometry::l1_distance(preds.boxes[q], gts.boxes[g]) -
                   w.giou * geometry::giou(pq, gts.boxes[g].to_xyxy());
    }
  }
  return cost;
}

int effective_replication(int k, int n_queries, int n_gt) {
  if (n_gt <= 0) return std::max(1, k);
  return std::max(1, std::min(k, n_queries / n_gt));
}

MatchResult match_one_to_many(const Matrix& cost, int k, std::span<const unsigned char> active) {
  if (k < 1) throw std::invalid_argument("match_one_to_many: K must be >= 1");
  const int n = cost.rows;
  const int n_gt = cost.cols;
  if (!active.empty() && static_cast<int>(active.size()) != n)
    throw std::invalid_argument("match_one_to_many: active mask length mismatch");
  std::vector<int> candidates;
  for (int q = 0; q < n; ++q)
    if (active.empty() || active[q]) candidates.push_back(q);
  if (candidates.empty()) throw std::invalid_argument("match_one_to_many: no active queries");

  MatchResult result;
  if (n_gt == 0) {
    result.unmatched_queries = candidates;
    return result;
  }
  const int n_cand = static_cast<int>(candidates.size());
  const int k_eff = effective_replication(k, n_cand, n_gt);
  result.replication = k_eff;

  // slots x candidates, slot = g * k_eff + r
  Matrix slots(n_gt * k_eff, n_cand);
  for (int g = 0; g < n_gt; ++g)
    for (int r = 0; r < k_eff; ++r)
      for (int c = 0; c < n_cand; ++c) slots(g * k_eff + r, c) = cost(candidates[c], g);

  const MatchResult raw = hungarian(slots);
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  for (const auto& pr : raw.pairs) {
    const int q = candidates[pr.query];
    result.pairs.push_back({pr.slot, q, pr.slot / k_eff, pr.cost});
    taken[q] = 1;
  }
  result.total_cost = raw.total_cost;
  for (int q : candidates)
    if (!taken[q]) result.unmatched_queries.push_back(q);
  return result;
}

MatchResult match_one_to_many(const PredictionView& preds, const GroundTruth& gts, int k, const CostWeights& w) {
  if (preds.size() < 1) throw std::invalid_argument("match_one_to_many: no queries");
  return match_one_to_many(build_match_cost(preds, gts, w), k, preds.active);
}

MatchResult match_one_to_one(const Matrix& cost, std::span<const unsigned char> active) {
  return match_one_to_many(cost, 1, active);
}

MatchResult match_one_to_one(const PredictionView& preds, const GroundTruth& gts, const CostWeights& w) {
  return match_one_to_many(preds, gts, 1, w);
}

}  // namespace dsdet::assignment
