// SPDX-License-Identifier: Apache-2.0

#include "dsdet/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsdet/numerics/ops.hpp"

namespace dsdet::losses {

namespace nx = dsdet::numerics;
using geometry::BoxCxCyWH;

void PoCooParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("pocoo alpha must lie in [0, 1]");
  if (!(image_h > 0.0 && image_w > 0.0)) throw std::invalid_argument("pocoo image extents must be positive");
}

double pocoo_size_factor(double box_h, double box_w, const PoCooParams& params) {
  const double h_px = box_h * params.image_h;
  const double w_px = box_w * params.image_w;
  const double rel = std::clamp(std::sqrt((h_px / params.image_h) * (w_px / params.image_w)), 0.0, 1.0);
  const double base = 1.0 - rel;
  // A box covering the whole image gets no size bonus for every alpha, 0^0 included.
  if (base <= 0.0) return 1.0;
  return std::pow(base, params.alpha) + 1.0;
}

double iabce_target(double score, double iou, double mixing) {
  score = std::clamp(score, 0.0, 1.0);
  iou = std::clamp(iou, 0.0, 1.0);
  return std::pow(score, mixing) * std::pow(iou, 1.0 - mixing);
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kEncoder: return "enc";
    case Stage::kBoxLocating: return "blp";
    case Stage::kDeduplication: return "dp";
  }
  return "?";
}

template <typename T>
Tensor<T> pocoo_loss(const Tensor<T>& logits, const MatchResult& match, const GroundTruth& gts,
                     std::span<const double> targets, const PoCooParams& params,
                     std::span<const unsigned char> active) {
  params.validate();
  if (logits.ndim() != 2) throw nx::DimensionError("pocoo_loss: logits must be 2-D");
  if (targets.size() != match.pairs.size()) throw std::invalid_argument("pocoo_loss: one target per matched pair");
  const int n = logits.rows();
  const int c = logits.cols();
  std::vector<unsigned char> is_pos(static_cast<std::size_t>(n) * c, 0);
  std::vector<int> pos_idx;
  std::vector<T> pos_t;
  std::vector<T> pos_w;
  for (std::size_t i = 0; i < match.pairs.size(); ++i) {
    const auto& pr = match.pairs[i];
    const double t = targets[i];
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("pocoo_loss: target outside [0, 1]");
    const int cls = gts.classes.at(static_cast<std::size_t>(pr.gt));
    const int flat = pr.query * c + cls;
    is_pos[flat] = 1;
    pos_idx.push_back(flat);
    pos_t.push_back(static_cast<T>(t));
    const auto& b = gts.boxes.at(static_cast<std::size_t>(pr.gt));
    pos_w.push_back(static_cast<T>(pocoo_size_factor(b.h, b.w, params)));
  }
  std::vector<int> neg_idx;
  for (int q = 0; q < n; ++q) {
    if (!active.empty() && !active[q]) continue;
    for (int k = 0; k < c; ++k)
      if (!is_pos[q * c + k]) neg_idx.push_back(q * c + k);
  }

  Tensor<T> total = Tensor<T>::scalar(T(0));
  bool have = false;
  if (!pos_idx.empty()) {
    auto x = nx::gather(logits, std::span<const int>(pos_idx));
    auto bce = nx::bce_with_logits(x, std::span<const T>(pos_t));
    const int n_pos = static_cast<int>(pos_w.size());
    Tensor<T> w({n_pos}, std::move(pos_w));
    total = nx::sum(nx::mul(bce, w));
    have = true;
  }
  if (!neg_idx.empty()) {
    auto x = nx::gather(logits, std::span<const int>(neg_idx));
    std::vector<T> zeros(neg_idx.size(), T(0));
    auto p = nx::sigmoid(x);
    auto neg = nx::sum(nx::mul(nx::square(p), nx::bce_with_logits(x, std::span<const T>(zeros))));
    total = have ? nx::add(total, neg) : neg;
  }
  return total;
}

namespace {

template <typename T>
struct Corners {
  Tensor<T> x1, y1, x2, y2, w, h;
};

template <typename T>
Corners<T> corners_of(const Tensor<T>& boxes) {
  auto cx = nx::slice_cols(boxes, 0, 1);
  auto cy = nx::slice_cols(boxes, 1, 2);
  auto w = nx::slice_cols(boxes, 2, 3);
  auto h = nx::slice_cols(boxes, 3, 4);
  auto hw = nx::scale(w, T(0.5));
  auto hh = nx::scale(h, T(0.5));
  return {nx::sub(cx, hw), nx::sub(cy, hh), nx::add(cx, hw), nx::add(cy, hh), w, h};
}

}  // namespace

template <typename T>
BoxLosses<T> box_losses(const Tensor<T>& pred_boxes, const GroundTruth& gts, const MatchResult& match) {
  if (match.pairs.empty()) return {Tensor<T>::scalar(T(0)), Tensor<T>::scalar(T(0))};
  const int p = static_cast<int>(match.pairs.size());
  std::vector<int> rows;
  std::vector<T> gt_vals;
  rows.reserve(static_cast<std::size_t>(p));
  for (const auto& pr : match.pairs) {
    rows.push_back(pr.query);
    const auto& b = gts.boxes.at(static_cast<std::size_t>(pr.gt));
    gt_vals.insert(gt_vals.end(), {static_cast<T>(b.cx), static_cast<T>(b.cy), static_cast<T>(b.w), static_cast<T>(b.h)});
  }
  auto pred = nx::gather_rows(pred_boxes, std::span<const int>(rows));
  Tensor<T> gt({p, 4}, std::move(gt_vals));
  const T inv_p = T(1) / T(p);

  auto l1 = nx::scale(nx::sum(nx::abs(nx::sub(pred, gt))), inv_p);

  const auto a = corners_of(pred);
  const auto b = corners_of(gt);
  auto iw = nx::relu(nx::sub(nx::minimum(a.x2, b.x2), nx::maximum(a.x1, b.x1)));
  auto ih = nx::relu(nx::sub(nx::minimum(a.y2, b.y2), nx::maximum(a.y1, b.y1)));
  auto inter = nx::mul(iw, ih);
  auto uni = nx::sub(nx::add(nx::mul(a.w, a.h), nx::mul(b.w, b.h)), inter);
  auto iou = nx::div(inter, uni);
  auto ew = nx::sub(nx::maximum(a.x2, b.x2), nx::minimum(a.x1, b.x1));
  auto eh = nx::sub(nx::maximum(a.y2, b.y2), nx::minimum(a.y1, b.y1));
  auto enclose = nx::mul(ew, eh);
  auto giou = nx::sub(iou, nx::div(nx::sub(enclose, uni), enclose));
  auto giou_loss = nx::add_scalar(nx::scale(nx::sum(giou), -inv_p), T(1));
  return {l1, giou_loss};
}

template <typename T>
MatchResult match_stage(const StagePrediction<T>& pred, const GroundTruth& gts, const LossSettings& settings) {
  const int n = pred.logits.rows();
  const int c = pred.logits.cols();
  std::vector<double> logits(pred.logits.values().begin(), pred.logits.values().end());
  std::vector<BoxCxCyWH> boxes(static_cast<std::size_t>(n));
  const auto bv = pred.boxes.values();
  for (int i = 0; i < n; ++i)
    boxes[i] = {double(bv[i * 4]), double(bv[i * 4 + 1]), double(bv[i * 4 + 2]), double(bv[i * 4 + 3])};
  assignment::PredictionView view{c, logits, boxes, pred.active};
  if (pred.stage == Stage::kDeduplication) return assignment::match_one_to_one(view, gts, settings.dp_cost);
  return assignment::match_one_to_many(view, gts, settings.k, settings.blp_cost);
}

template <typename T>
LossBreakdown<T> total_loss(const std::vector<StagePrediction<T>>& predictions, const GroundTruth& gts,
                            const LossSettings& settings) {
  LossBreakdown<T> out;
  Tensor<T> total;
  const auto& w = settings.weights;
  const PoCooParams& pocoo = settings.pocoo;

  for (const auto& pred : predictions) {
    LayerTerms<T> terms;
    terms.stage = pred.stage;
    terms.layer = pred.layer;
    terms.match = match_stage(pred, gts, settings);
    const auto& match = terms.match;

    const int c = pred.logits.cols();
    const auto lv = pred.logits.values();
    const auto bv = pred.boxes.values();
    std::vector<double> targets;
    targets.reserve(match.pairs.size());
    for (const auto& pr : match.pairs) {
      if (settings.target_mode == TargetMode::kBinary) {
        targets.push_back(1.0);
        continue;
      }
      const double logit = lv[static_cast<std::size_t>(pr.query) * c + gts.classes[pr.gt]];
      const double score = 1.0 / (1.0 + std::exp(-logit));
      const BoxCxCyWH pb{bv[pr.query * 4], bv[pr.query * 4 + 1], bv[pr.query * 4 + 2], bv[pr.query * 4 + 3]};
      targets.push_back(iabce_target(score, geometry::iou(pb, gts.boxes[pr.gt]), settings.target_mixing));
    }
    const T norm = T(1) / T(std::max<std::size_t>(1, match.pairs.size()));
    auto cls = nx::scale(pocoo_loss(pred.logits, match, gts, targets, pocoo, pred.active), norm);
    auto boxes = box_losses(pred.boxes, gts, match);
    terms.cls = cls;
    terms.l1 = boxes.l1;
    terms.giou = boxes.giou;

    double wc = 0, wl = 0, wg = 0;
    switch (pred.stage) {
      case Stage::kEncoder: wc = w.enc_cls; wl = w.enc_l1; wg = w.enc_giou; break;
      case Stage::kBoxLocating: wc = w.blp_cls; wl = w.blp_l1; wg = w.blp_giou; break;
      case Stage::kDeduplication: wc = w.dp_cls; wl = w.dp_l1; wg = w.dp_giou; break;
    }
    auto layer_total = nx::add(nx::add(nx::scale(cls, T(wc)), nx::scale(boxes.l1, T(wl))), nx::scale(boxes.giou, T(wg)));
    total = total.defined() ? nx::add(total, layer_total) : layer_total;
    out.layers.push_back(std::move(terms));
  }
  out.total = total.defined() ? total : Tensor<T>::scalar(T(0));
  return out;
}

template <typename T>
double LossBreakdown<T>::stage_value(Stage stage, const LossWeights& w) const {
  double s = 0;
  for (const auto& t : layers) {
    if (t.stage != stage) continue;
    switch (stage) {
      case Stage::kEncoder: s += w.enc_cls * t.cls.item() + w.enc_l1 * t.l1.item() + w.enc_giou * t.giou.item(); break;
      case Stage::kBoxLocating: s += w.blp_cls * t.cls.item() + w.blp_l1 * t.l1.item() + w.blp_giou * t.giou.item(); break;
      case Stage::kDeduplication: s += w.dp_cls * t.cls.item() + w.dp_l1 * t.l1.item() + w.dp_giou * t.giou.item(); break;
    }
  }
  return s;
}

#define DSDET_INSTANTIATE_LOSSES(T)                                                                              \
  template Tensor<T> pocoo_loss(const Tensor<T>&, const MatchResult&, const GroundTruth&, std::span<const double>, \
                                const PoCooParams&, std::span<const unsigned char>);                             \
  template BoxLosses<T> box_losses(const Tensor<T>&, const GroundTruth&, const MatchResult&);                    \
  template MatchResult match_stage(const StagePrediction<T>&, const GroundTruth&, const LossSettings&);          \
  template LossBreakdown<T> total_loss(const std::vector<StagePrediction<T>>&, const GroundTruth&,               \
                                       const LossSettings&);                                                     \
  template struct LossBreakdown<T>;

DSDET_INSTANTIATE_LOSSES(float)
DSDET_INSTANTIATE_LOSSES(double)

}  // namespace dsdet::losses
