// SPDX-License-Identifier: Apache-2.0

#include "dsdet/evalkit/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace dsdet::evalkit {
namespace {

constexpr std::size_t kMaxDetections = 100;  // per image, as in COCO

struct Candidate {
  std::size_t image;
  double score;
  geometry::BoxXYXY box;
};

// Per-image top-kMaxDetections by score, stable.
std::vector<std::vector<ScoredBox>> top_per_image(const std::vector<std::vector<ScoredBox>>& predictions) {
  std::vector<std::vector<ScoredBox>> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) {
    auto v = p;
    std::stable_sort(v.begin(), v.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    if (v.size() > kMaxDetections) v.resize(kMaxDetections);
    out.push_back(std::move(v));
  }
  return out;
}

// Returns {ap, final recall} for one class at one threshold; ap < 0 means
// the class has no ground truth.
std::pair<double, double> class_ap(const std::vector<std::vector<ScoredBox>>& preds, const std::vector<GroundTruth>& gts,
                                   double thr, int cls, bool agnostic) {
  std::vector<std::vector<int>> gt_idx(gts.size());
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (int g = 0; g < gts[i].size(); ++g)
      if (agnostic || gts[i].classes[g] == cls) {
        gt_idx[i].push_back(g);
        ++n_gt;
      }
  if (n_gt == 0) return {-1.0, -1.0};

  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (const auto& p : preds[i])
      if (agnostic || p.cls == cls) cands.push_back({i, p.score, p.box.to_xyxy()});
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<std::vector<char>> used(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) used[i].assign(gt_idx[i].size(), 0);
  std::vector<double> precision, recall;
  precision.reserve(cands.size());
  recall.reserve(cands.size());
  double tp = 0, fp = 0;
  for (const auto& c : cands) {
    int best = -1;
    double best_iou = thr;
    if (c.image < gts.size()) {
      const auto& idx = gt_idx[c.image];
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (used[c.image][k]) continue;
        const double v = geometry::iou(c.box, gts[c.image].boxes[idx[k]].to_xyxy());
        if (v >= best_iou) {
          best_iou = v;
          best = static_cast<int>(k);
        }
      }
    }
    if (best >= 0) {
      used[c.image][best] = 1;
      tp += 1;
    } else {
      fp += 1;
    }
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(n_gt));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return {sum / 101.0, recall.empty() ? 0.0 : recall.back()};
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

double PrecisionResult::mean_ap() const {
  return ap.empty() ? 0.0 : std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
}

double PrecisionResult::mean_recall() const {
  return recall.empty() ? 0.0 : std::accumulate(recall.begin(), recall.end(), 0.0) / static_cast<double>(recall.size());
}

PrecisionResult average_precision(const std::vector<std::vector<ScoredBox>>& predictions,
                                  const std::vector<GroundTruth>& gts, std::span<const double> iou_thresholds,
                                  int num_classes, bool class_agnostic) {
  const auto preds = top_per_image(predictions);
  PrecisionResult out;
  const int n_cls = class_agnostic ? 1 : num_classes;
  for (double thr : iou_thresholds) {
    double ap_sum = 0, rec_sum = 0;
    int counted = 0;
    for (int c = 0; c < n_cls; ++c) {
      const auto [ap, rec] = class_ap(preds, gts, thr, c, class_agnostic);
      if (ap < 0) continue;
      ap_sum += ap;
      rec_sum += rec;
      ++counted;
    }
    out.ap.push_back(counted ? ap_sum / counted : 0.0);
    out.recall.push_back(counted ? rec_sum / counted : 0.0);
  }
  return out;
}

double duplicate_rate(const std::vector<std::vector<ScoredBox>>& predictions, const std::vector<GroundTruth>& gts,
                      double iou_thr, double score_thr) {
  double extra = 0;
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (const auto& g : gts[i].boxes) {
      ++n_gt;
      if (i >= predictions.size()) continue;
      int hits = 0;
      const auto gb = g.to_xyxy();
      for (const auto& p : predictions[i])
        if (p.score > score_thr && geometry::iou(p.box.to_xyxy(), gb) > iou_thr) ++hits;
      extra += std::max(0, hits - 1);
    }
  }
  return n_gt == 0 ? 0.0 : extra / static_cast<double>(n_gt);
}

std::vector<BucketRow> bucket_stats(std::span<const ImageRecord> images, int num_classes, int step) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const int n = images[i].gts.size();
    groups[n == 0 ? -1 : (n - 1) / step].push_back(i);
  }
  const auto thresholds = coco_iou_thresholds();
  std::vector<BucketRow> rows;
  for (const auto& [key, idx] : groups) {
    BucketRow row;
    row.lo = key < 0 ? 0 : key * step + 1;
    row.hi = key < 0 ? 0 : (key + 1) * step;
    row.images = static_cast<int>(idx.size());
    std::vector<std::vector<ScoredBox>> preds;
    std::vector<GroundTruth> gts;
    double q = 0, o = 0;
    for (std::size_t i : idx) {
      preds.push_back(images[i].predictions);
      gts.push_back(images[i].gts);
      q += images[i].query_count;
      o += images[i].gts.size();
    }
    row.mean_queries = q / row.images;
    row.mean_objects = o / row.images;
    const auto pr = average_precision(preds, gts, thresholds, num_classes);
    row.ap = pr.mean_ap();
    row.ap50 = pr.ap.front();
    rows.push_back(row);
  }
  return rows;
}

EvalReport evaluate(std::span<const ImageRecord> images, int num_classes) {
  EvalReport r;
  r.images = static_cast<int>(images.size());
  std::vector<std::vector<ScoredBox>> preds;
  std::vector<GroundTruth> gts;
  double q = 0;
  for (const auto& im : images) {
    preds.push_back(im.predictions);
    gts.push_back(im.gts);
    q += im.query_count;
  }
  const auto thresholds = coco_iou_thresholds();
  const auto pr = average_precision(preds, gts, thresholds, num_classes);
  r.ap = pr.mean_ap();
  r.ap50 = pr.ap[0];
  r.ap75 = pr.ap[5];
  r.ar = pr.mean_recall();
  const double half[] = {0.5};
  r.ap50_class_agnostic = average_precision(preds, gts, half, num_classes, true).ap[0];
  r.duplicate_rate = duplicate_rate(preds, gts);
  r.mean_query_count = images.empty() ? 0.0 : q / static_cast<double>(images.size());
  r.buckets = bucket_stats(images, num_classes);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json buckets_json = nlohmann::json::array();
  for (const auto& b : buckets)
    buckets_json.push_back({{"lo", b.lo},
                            {"hi", b.hi},
                            {"images", b.images},
                            {"mean_queries", b.mean_queries},
                            {"mean_objects", b.mean_objects},
                            {"ap", b.ap},
                            {"ap50", b.ap50}});
  return {{"ap", ap},
          {"ap50", ap50},
          {"ap75", ap75},
          {"ar", ar},
          {"ap50_class_agnostic", ap50_class_agnostic},
          {"duplicate_rate", duplicate_rate},
          {"mean_query_count", mean_query_count},
          {"threshold", threshold},
          {"images", images},
          {"buckets", buckets_json}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "ap,ap50,ap75,ar,ap50_class_agnostic,duplicate_rate,mean_query_count,threshold,images\n";
  os << ap << ',' << ap50 << ',' << ap75 << ',' << ar << ',' << ap50_class_agnostic << ',' << duplicate_rate << ','
     << mean_query_count << ',' << threshold << ',' << images << '\n';
  os << "\nbucket_lo,bucket_hi,images,mean_queries,mean_objects,ap,ap50\n";
  for (const auto& b : buckets)
    os << b.lo << ',' << b.hi << ',' << b.images << ',' << b.mean_queries << ',' << b.mean_objects << ',' << b.ap << ','
       << b.ap50 << '\n';
  return os.str();
}

}  // namespace dsdet::evalkit
