// SPDX-License-Identifier: Apache-2.0

#include "dsdet/geometry/box.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dsdet::geometry {

BoxCxCyWH BoxCxCyWH::clamped(double cx, double cy, double w, double h) {
  return {std::clamp(cx, 0.0, 1.0), std::clamp(cy, 0.0, 1.0), std::clamp(w, kMinExtent, 1.0),
          std::clamp(h, kMinExtent, 1.0)};
}

BoxCxCyWH to_cxcywh(const BoxXYXY& b) {
  return {0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2), b.x2 - b.x1, b.y2 - b.y1};
}

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const BoxXYXY& a, const BoxXYXY& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double enclose = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) * (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  const double iou_v = uni > 0 ? inter / uni : 0.0;
  if (enclose <= 0) return iou_v;
  return iou_v - (enclose - uni) / enclose;
}

double l1_distance(const BoxCxCyWH& a, const BoxCxCyWH& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
  return t;
}

PairwiseCosts pairwise_cost_matrices(std::span<const BoxCxCyWH> preds, std::span<const BoxCxCyWH> gts) {
  if (preds.empty()) throw std::invalid_argument("pairwise_cost_matrices: empty prediction set");
  const int n = static_cast<int>(preds.size());
  const int m = static_cast<int>(gts.size());
  PairwiseCosts out{Matrix(n, m), Matrix(n, m)};
  for (int i = 0; i < n; ++i) {
    const BoxXYXY pi = preds[i].to_xyxy();
    for (int j = 0; j < m; ++j) {
      out.l1(i, j) = l1_distance(preds[i], gts[j]);
      out.giou_cost(i, j) = -giou(pi, gts[j].to_xyxy());
    }
  }
  return out;
}

Matrix pairwise_iou(std::span<const BoxCxCyWH> a, std::span<const BoxCxCyWH> b) {
  Matrix out(static_cast<int>(a.size()), static_cast<int>(b.size()));
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) = iou(a[i], b[j]);
  return out;
}

std::vector<int> nms(std::span<const BoxCxCyWH> boxes, std::span<const double> scores, double iou_threshold) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: boxes and scores differ in length");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  std::vector<BoxXYXY> kept_boxes;
  for (int idx : order) {
    const BoxXYXY b = boxes[idx].to_xyxy();
    bool suppressed = false;
    for (const auto& k : kept_boxes) {
      if (iou(b, k) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(idx);
      kept_boxes.push_back(b);
    }
  }
  return kept;
}

}  // namespace dsdet::geometry
