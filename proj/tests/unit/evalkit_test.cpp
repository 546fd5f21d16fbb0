// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dsdet/evalkit/flops.hpp"
#include "dsdet/evalkit/metrics.hpp"
#include "dsdet/numerics/nn.hpp"

namespace {

namespace e = dsdet::evalkit;
using dsdet::geometry::BoxCxCyWH;
using e::GroundTruth;
using e::ScoredBox;

const std::vector<double> kHalf{0.5};

GroundTruth gt(std::vector<int> cls, std::vector<BoxCxCyWH> boxes) {
  GroundTruth g;
  g.classes = std::move(cls);
  g.boxes = std::move(boxes);
  return g;
}

const BoxCxCyWH kA{0.2, 0.2, 0.1, 0.1};
const BoxCxCyWH kB{0.7, 0.7, 0.2, 0.2};
const BoxCxCyWH kFar{0.5, 0.9, 0.05, 0.05};

TEST(AveragePrecision, PerfectDetections) {
  const std::vector<GroundTruth> gts{gt({0, 1}, {kA, kB})};
  const std::vector<std::vector<ScoredBox>> preds{{{kA, 0, 0.9}, {kB, 1, 0.8}}};
  const auto r = e::average_precision(preds, gts, e::coco_iou_thresholds(), 2);
  for (double v : r.ap) EXPECT_DOUBLE_EQ(v, 1.0);
  for (double v : r.recall) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(AveragePrecision, HandPrecisionRecallCurve) {
  // Ranked TP, FP, TP against two ground truths: precision 1, 1/2, 2/3 at
  // recall 1/2, 1/2, 1. Interpolated: 1 for r <= 0.5 (51 points), 2/3 above.
  const std::vector<GroundTruth> gts{gt({0, 0}, {kA, kB})};
  const std::vector<std::vector<ScoredBox>> preds{{{kA, 0, 0.9}, {kFar, 0, 0.8}, {kB, 0, 0.7}}};
  const auto r = e::average_precision(preds, gts, kHalf, 1);
  EXPECT_NEAR(r.ap[0], (51.0 + 50.0 * 2.0 / 3.0) / 101.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.recall[0], 1.0);
}

TEST(AveragePrecision, DuplicateCountsAsFalsePositive) {
  const std::vector<GroundTruth> gts{gt({0}, {kA})};
  const std::vector<std::vector<ScoredBox>> preds{{{kA, 0, 0.9}, {kA, 0, 0.8}}};
  EXPECT_DOUBLE_EQ(e::average_precision(preds, gts, kHalf, 1).ap[0], 1.0);
  // The duplicate ranked first costs precision at the only recall level.
  const std::vector<std::vector<ScoredBox>> preds2{{{kFar, 0, 0.95}, {kA, 0, 0.9}}};
  EXPECT_NEAR(e::average_precision(preds2, gts, kHalf, 1).ap[0], 0.5, 1e-12);
}

TEST(AveragePrecision, WrongClassAndClassAgnostic) {
  const std::vector<GroundTruth> gts{gt({0}, {kA})};
  const std::vector<std::vector<ScoredBox>> preds{{{kA, 1, 0.9}}};
  EXPECT_DOUBLE_EQ(e::average_precision(preds, gts, kHalf, 2).ap[0], 0.0);
  EXPECT_DOUBLE_EQ(e::average_precision(preds, gts, kHalf, 2, true).ap[0], 1.0);
}

TEST(AveragePrecision, NoGroundTruthGivesZero) {
  const std::vector<GroundTruth> gts{GroundTruth{}};
  const std::vector<std::vector<ScoredBox>> preds{{{kA, 0, 0.9}}};
  EXPECT_DOUBLE_EQ(e::average_precision(preds, gts, kHalf, 3).ap[0], 0.0);
}

TEST(AveragePrecision, OnlyTopHundredPerImageCount) {
  std::vector<ScoredBox> p;
  for (int i = 0; i < 100; ++i) p.push_back({kFar, 0, 0.9});
  p.push_back({kA, 0, 0.1});
  const std::vector<GroundTruth> gts{gt({0}, {kA})};
  EXPECT_DOUBLE_EQ(e::average_precision({p}, gts, kHalf, 1).ap[0], 0.0);
}

// Independent reference: per class, rank all detections, greedily assign
// each to its best free ground truth, then for each of the 101 recall
// levels take the best precision among all cut-offs reaching it.
double reference_ap(const std::vector<std::vector<ScoredBox>>& preds, const std::vector<GroundTruth>& gts, double thr,
                    int num_classes) {
  double total = 0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    int n_gt = 0;
    for (const auto& g : gts)
      for (int k : g.classes) n_gt += k == c;
    if (n_gt == 0) continue;
    struct D {
      double score;
      std::size_t img;
      BoxCxCyWH box;
    };
    std::vector<D> dets;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      auto v = preds[i];
      std::stable_sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.score > b.score; });
      if (v.size() > 100) v.resize(100);
      for (const auto& p : v)
        if (p.cls == c) dets.push_back({p.score, i, p.box});
    }
    std::stable_sort(dets.begin(), dets.end(), [](auto& a, auto& b) { return a.score > b.score; });
    std::vector<std::vector<char>> used(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].boxes.size(), 0);
    std::vector<std::pair<double, double>> pr;  // (recall, precision)
    int tp = 0;
    for (std::size_t j = 0; j < dets.size(); ++j) {
      const auto& d = dets[j];
      int best = -1;
      double bi = -1;
      for (std::size_t g = 0; g < gts[d.img].boxes.size(); ++g) {
        if (gts[d.img].classes[g] != c || used[d.img][g]) continue;
        const double v = dsdet::geometry::iou(d.box, gts[d.img].boxes[g]);
        if (v >= thr && v > bi) {
          bi = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[d.img][best] = 1;
        ++tp;
      }
      pr.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / static_cast<double>(j + 1)});
    }
    double s = 0;
    for (int k = 0; k <= 100; ++k) {
      double best = 0;
      for (const auto& [rec, prec] : pr)
        if (rec >= k / 100.0) best = std::max(best, prec);
      s += best;
    }
    total += s / 101.0;
    ++counted;
  }
  return counted ? total / counted : 0.0;
}

TEST(AveragePrecision, MatchesExhaustiveReference) {
  dsdet::numerics::Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int images = 1 + static_cast<int>(rng.below(4));
    const int classes = 1 + static_cast<int>(rng.below(3));
    std::vector<GroundTruth> gts(images);
    std::vector<std::vector<ScoredBox>> preds(images);
    for (int i = 0; i < images; ++i) {
      const int ng = static_cast<int>(rng.below(5));
      for (int g = 0; g < ng; ++g) {
        gts[i].classes.push_back(static_cast<int>(rng.below(classes)));
        gts[i].boxes.push_back(BoxCxCyWH::clamped(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                                  rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)));
      }
      const int np = static_cast<int>(rng.below(8));
      for (int p = 0; p < np; ++p) {
        BoxCxCyWH b;
        if (ng > 0 && rng.uniform() < 0.6) {
          const auto& src = gts[i].boxes[rng.below(ng)];
          b = BoxCxCyWH::clamped(src.cx + rng.uniform(-0.05, 0.05), src.cy + rng.uniform(-0.05, 0.05),
                                 src.w * rng.uniform(0.8, 1.2), src.h * rng.uniform(0.8, 1.2));
        } else {
          b = BoxCxCyWH::clamped(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3),
                                 rng.uniform(0.1, 0.3));
        }
        preds[i].push_back({b, static_cast<int>(rng.below(classes)), rng.uniform()});
      }
    }
    const auto thr = e::coco_iou_thresholds();
    const auto r = e::average_precision(preds, gts, thr, classes);
    for (std::size_t t = 0; t < thr.size(); ++t)
      EXPECT_NEAR(r.ap[t], reference_ap(preds, gts, thr[t], classes), 1e-12) << "trial " << trial;
  }
}

TEST(DuplicateRate, Cases) {
  const std::vector<GroundTruth> gts{gt({0, 1}, {kA, kB})};
  EXPECT_DOUBLE_EQ(e::duplicate_rate({{{kA, 0, 0.9}, {kB, 1, 0.9}}}, gts), 0.0);
  // Three hits on A (class ignored), one below the score floor.
  EXPECT_DOUBLE_EQ(e::duplicate_rate({{{kA, 0, 0.9}, {kA, 1, 0.8}, {kA, 0, 0.7}, {kA, 0, 0.2}}}, gts), 1.0);
  EXPECT_DOUBLE_EQ(e::duplicate_rate({{}}, gts), 0.0);
  EXPECT_DOUBLE_EQ(e::duplicate_rate({{{kA, 0, 0.9}}}, {GroundTruth{}}), 0.0);
}

TEST(Buckets, GroupsByObjectCount) {
  std::vector<e::ImageRecord> recs(4);
  recs[0].gts = gt({0}, {kA});
  recs[0].query_count = 4;
  recs[1].gts = gt({0, 0, 0, 0, 0, 0}, {kA, kA, kA, kA, kA, kA});
  recs[1].query_count = 10;
  recs[2].gts = gt({0, 0}, {kA, kB});
  recs[2].query_count = 6;
  recs[3].query_count = 1;
  const auto rows = e::bucket_stats(recs, 1);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].lo, 0);
  EXPECT_EQ(rows[0].hi, 0);
  EXPECT_EQ(rows[1].lo, 1);
  EXPECT_EQ(rows[1].hi, 5);
  EXPECT_EQ(rows[1].images, 2);
  EXPECT_DOUBLE_EQ(rows[1].mean_queries, 5.0);
  EXPECT_DOUBLE_EQ(rows[1].mean_objects, 1.5);
  EXPECT_EQ(rows[2].lo, 6);
  EXPECT_EQ(rows[2].hi, 10);
}

TEST(EvalReport, SerializesEveryField) {
  std::vector<e::ImageRecord> recs(1);
  recs[0].gts = gt({0}, {kA});
  recs[0].predictions = {{kA, 0, 0.9}};
  recs[0].query_count = 3;
  const auto rep = e::evaluate(recs, 1);
  EXPECT_DOUBLE_EQ(rep.ap50, 1.0);
  EXPECT_DOUBLE_EQ(rep.mean_query_count, 3.0);
  const auto j = rep.to_json();
  for (const char* k : {"ap", "ap50", "ap75", "ar", "ap50_class_agnostic", "duplicate_rate", "mean_query_count",
                        "threshold", "images", "buckets"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(rep.to_csv().rfind("ap,ap50,", 0), 0u);
}

TEST(Flops, HandComputedDefaults) {
  dsdet::model::DetectorConfig c;  // C=32, M=256, H=64, 5 classes, T1=4, T2=2, lambda=2
  const auto f = e::decoder_flops(10, c);
  const double n = 10, C = 32, M = 256, H = 64, K = 5;
  EXPECT_DOUBLE_EQ(f.ca, 6 * (4 * n * C * C + 4 * n * M * C));
  EXPECT_DOUBLE_EQ(f.memory, 6 * 4 * M * C * C);
  EXPECT_DOUBLE_EQ(f.sa, 2 * 2 * 4 * n * n * C);
  EXPECT_DOUBLE_EQ(f.sa_proj, 2 * 2 * 8 * n * C * C);
  EXPECT_DOUBLE_EQ(f.mlp, (4 + 4) * 4 * n * C * H);
  EXPECT_DOUBLE_EQ(f.heads, 6 * (2 * n * C * K + 2 * n * C * C + 8 * n * C));
  EXPECT_DOUBLE_EQ(f.total, f.ca + f.memory + f.sa + f.sa_proj + f.mlp + f.heads);
  EXPECT_DOUBLE_EQ(f.total, f.blp_total + f.dp_total);
}

TEST(Flops, ScalingInQueryCount) {
  dsdet::model::DetectorConfig c;
  const auto a = e::decoder_flops(16, c);
  const auto b = e::decoder_flops(32, c);
  EXPECT_DOUBLE_EQ(b.ca, 2 * a.ca);
  EXPECT_DOUBLE_EQ(b.sa, 4 * a.sa);
  EXPECT_DOUBLE_EQ(b.memory, a.memory);
  c.lambda = 0;
  EXPECT_DOUBLE_EQ(e::decoder_flops(16, c).sa, 0.0);
  EXPECT_THROW(e::decoder_flops(0, c), std::invalid_argument);
  // Strictly increasing in N.
  double prev = 0;
  for (int n = 1; n <= 300; n += 7) {
    const double t = e::decoder_flops(n, dsdet::model::DetectorConfig{}).total;
    EXPECT_GT(t, prev);
    prev = t;
  }
}

}  // namespace
