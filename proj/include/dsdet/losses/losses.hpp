// SPDX-License-Identifier: Apache-2.0
//
// Classification (PoCoo, IoU-aware targets) and box regression losses, plus
// the per-stage assembly used for training.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "dsdet/assignment/matching.hpp"
#include "dsdet/numerics/tensor.hpp"

namespace dsdet::losses {

using assignment::GroundTruth;
using assignment::MatchResult;
using numerics::Tensor;

struct PoCooParams {
  double alpha = 0.5;
  double image_h = 64.0;  // pixels
  double image_w = 64.0;

  void validate() const;
};

struct LossWeights {
  double enc_cls = 1.5;
  // The encoder's initial-box head is supervised with the BLP box weights.
  double enc_l1 = 5.0;
  double enc_giou = 2.0;
  double blp_cls = 2.0;
  double blp_l1 = 5.0;
  double blp_giou = 2.0;
  double dp_cls = 2.0;
  double dp_l1 = 5.0;
  double dp_giou = 2.0;
};

// (1 - sqrt(h/H * w/W))^alpha + 1 for a box of normalized extents (h, w).
double pocoo_size_factor(double box_h, double box_w, const PoCooParams& params);

// IoU-aware soft label: p^m * u^(1-m). Monotone nondecreasing in p and u.
double iabce_target(double score, double iou, double mixing = 0.25);

// Unnormalized PoCoo sum over one image.
//   positives: (pair.query, class of pair.gt) with soft target targets[i]
//   negatives: every other (query, class) element of an active query
// logits: [N x C]. active (optional) excludes placeholder queries entirely.
// Throws std::invalid_argument when a target lies outside [0, 1].
template <typename T>
Tensor<T> pocoo_loss(const Tensor<T>& logits, const MatchResult& match, const GroundTruth& gts,
                     std::span<const double> targets, const PoCooParams& params,
                     std::span<const unsigned char> active = {});

template <typename T>
struct BoxLosses {
  Tensor<T> l1;    // mean over matched pairs of the summed |cx|+|cy|+|w|+|h| error
  Tensor<T> giou;  // mean over matched pairs of 1 - giou
};

// pred_boxes: [N x 4] in (cx, cy, w, h). Empty match gives constant zeros.
template <typename T>
BoxLosses<T> box_losses(const Tensor<T>& pred_boxes, const GroundTruth& gts, const MatchResult& match);

enum class Stage { kEncoder, kBoxLocating, kDeduplication };

std::string to_string(Stage s);

template <typename T>
struct StagePrediction {
  Stage stage = Stage::kBoxLocating;
  int layer = 0;
  Tensor<T> logits;                  // [N x C]
  Tensor<T> boxes;                   // [N x 4] cxcywh
  std::vector<unsigned char> active; // empty = all active
};

enum class TargetMode { kIouAware, kBinary };

struct LossSettings {
  LossWeights weights;
  assignment::CostWeights blp_cost = assignment::CostWeights::box_locating();
  assignment::CostWeights dp_cost = assignment::CostWeights::deduplication();
  int k = 6;
  PoCooParams pocoo;
  TargetMode target_mode = TargetMode::kIouAware;
  double target_mixing = 0.25;
};

template <typename T>
struct LayerTerms {
  Stage stage = Stage::kBoxLocating;
  int layer = 0;
  Tensor<T> cls;
  Tensor<T> l1;
  Tensor<T> giou;
  MatchResult match;
};

template <typename T>
struct LossBreakdown {
  std::vector<LayerTerms<T>> layers;
  Tensor<T> total;

  // Weighted stage sums as plain numbers (for logging).
  double stage_value(Stage stage, const LossWeights& w) const;
};

// Encoder predictions and BLP layers use one-to-many matching with the BLP
// cost; DP layers use one-to-one matching with the DP cost. Each layer's
// classification term is normalized by its number of matched pairs.
template <typename T>
LossBreakdown<T> total_loss(const std::vector<StagePrediction<T>>& predictions, const GroundTruth& gts,
                            const LossSettings& settings);

// Matching used by total_loss for one prediction set (exposed for tests and
// evaluation tooling).
template <typename T>
MatchResult match_stage(const StagePrediction<T>& pred, const GroundTruth& gts, const LossSettings& settings);

}  // namespace dsdet::losses
