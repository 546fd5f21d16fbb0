// SPDX-License-Identifier: Apache-2.0
//
// COCO-style detection metrics, duplicate counting and per-object-count
// bucket statistics.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsdet/assignment/matching.hpp"
#include "dsdet/geometry/box.hpp"

namespace dsdet::evalkit {

using assignment::GroundTruth;
using geometry::BoxCxCyWH;

struct ScoredBox {
  BoxCxCyWH box;
  int cls = 0;
  double score = 0.0;
};

// 0.50, 0.55, ..., 0.95
std::vector<double> coco_iou_thresholds();

struct PrecisionResult {
  std::vector<double> ap;      // per threshold, macro mean over classes with ground truth
  std::vector<double> recall;  // per threshold, macro mean of final recall
  double mean_ap() const;
  double mean_recall() const;
};

// Greedy score-descending matching per class and threshold (a prediction
// matches the highest-IoU unmatched ground truth of its class with IoU >=
// threshold), 101-point interpolated precision. class_agnostic folds every
// class into one. Classes without ground truth are skipped; with no ground
// truth at all every value is 0.
PrecisionResult average_precision(const std::vector<std::vector<ScoredBox>>& predictions,
                                  const std::vector<GroundTruth>& gts, std::span<const double> iou_thresholds,
                                  int num_classes, bool class_agnostic = false);

// Mean over ground truths of max(0, #predictions with IoU > iou_thr and
// score > score_thr, minus one). Class-agnostic. Zero ground truths -> 0.
double duplicate_rate(const std::vector<std::vector<ScoredBox>>& predictions, const std::vector<GroundTruth>& gts,
                      double iou_thr = 0.5, double score_thr = 0.3);

struct ImageRecord {
  std::vector<ScoredBox> predictions;
  GroundTruth gts;
  int query_count = 0;
};

struct BucketRow {
  int lo = 0;  // object-count range [lo, hi]
  int hi = 0;
  int images = 0;
  double mean_queries = 0.0;
  double mean_objects = 0.0;
  double ap = 0.0;
  double ap50 = 0.0;
};

inline constexpr int kBucketStep = 5;

// Rows in ascending object-count order; empty buckets are omitted. Scenes
// without objects form a [0, 0] bucket.
std::vector<BucketRow> bucket_stats(std::span<const ImageRecord> images, int num_classes, int step = kBucketStep);

struct EvalReport {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar = 0.0;
  double ap50_class_agnostic = 0.0;
  double duplicate_rate = 0.0;
  double mean_query_count = 0.0;
  double threshold = 0.0;  // selection threshold the queries were drawn with
  int images = 0;
  std::vector<BucketRow> buckets;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

EvalReport evaluate(std::span<const ImageRecord> images, int num_classes);

}  // namespace dsdet::evalkit
