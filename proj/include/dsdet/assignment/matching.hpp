// SPDX-License-Identifier: Apache-2.0
//
// Composite matching cost and the two label-assignment regimes.

#pragma once

#include <span>
#include <vector>

#include "dsdet/assignment/hungarian.hpp"
#include "dsdet/geometry/box.hpp"

namespace dsdet::assignment {

using geometry::BoxCxCyWH;

struct CostWeights {
  double cls = 2.0;
  double l1 = 2.0;
  double giou = 2.0;

  static CostWeights box_locating() { return {0.2, 5.0, 2.0}; }
  static CostWeights deduplication() { return {2.0, 2.0, 2.0}; }
};

// Read-only view of one image's predictions.
struct PredictionView {
  int num_classes = 0;
  std::span<const double> logits;          // N x num_classes
  std::span<const BoxCxCyWH> boxes;        // N
  std::span<const unsigned char> active;   // N, optional; zero = placeholder

  int size() const { return static_cast<int>(boxes.size()); }
  bool is_active(int q) const { return active.empty() || active[q] != 0; }
};

struct GroundTruth {
  std::vector<int> classes;
  std::vector<BoxCxCyWH> boxes;
  int size() const { return static_cast<int>(boxes.size()); }
};

// entry(q, g) = w_cls * softplus(-logit[q, class_g]) + w_l1 * L1 + w_giou * (-giou)
Matrix build_match_cost(const PredictionView& preds, const GroundTruth& gts, const CostWeights& weights);

// Replication factor actually used for n_queries candidates and n_gt targets.
int effective_replication(int k, int n_queries, int n_gt);

// Hungarian matching of each ground truth replicated K_eff times against the
// active predictions. `cost` is N_pred x N_gt (see build_match_cost).
MatchResult match_one_to_many(const Matrix& cost, int k, std::span<const unsigned char> active = {});
MatchResult match_one_to_many(const PredictionView& preds, const GroundTruth& gts, int k, const CostWeights& weights);

MatchResult match_one_to_one(const Matrix& cost, std::span<const unsigned char> active = {});
MatchResult match_one_to_one(const PredictionView& preds, const GroundTruth& gts, const CostWeights& weights);

}  // namespace dsdet::assignment
