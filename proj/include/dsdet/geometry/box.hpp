// SPDX-License-Identifier: Apache-2.0
//
// Normalized axis-aligned boxes, overlap metrics and the greedy NMS baseline.

#pragma once

#include <span>
#include <vector>

namespace dsdet::geometry {

inline constexpr double kMinExtent = 1e-6;

struct BoxXYXY {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double area() const { return (x2 - x1) * (y2 - y1); }
  friend bool operator==(const BoxXYXY&, const BoxXYXY&) = default;
};

struct BoxCxCyWH {
  double cx = 0.5, cy = 0.5, w = kMinExtent, h = kMinExtent;

  // Clamps into the normalized domain: centers in [0,1], extents in
  // [kMinExtent, 1].
  static BoxCxCyWH clamped(double cx, double cy, double w, double h);

  BoxXYXY to_xyxy() const { return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}; }
  double area() const { return w * h; }
  friend bool operator==(const BoxCxCyWH&, const BoxCxCyWH&) = default;
};

BoxCxCyWH to_cxcywh(const BoxXYXY& b);

double iou(const BoxXYXY& a, const BoxXYXY& b);
double giou(const BoxXYXY& a, const BoxXYXY& b);
inline double iou(const BoxCxCyWH& a, const BoxCxCyWH& b) { return iou(a.to_xyxy(), b.to_xyxy()); }
inline double giou(const BoxCxCyWH& a, const BoxCxCyWH& b) { return giou(a.to_xyxy(), b.to_xyxy()); }

// Sum of absolute coordinate differences in center/size form.
double l1_distance(const BoxCxCyWH& a, const BoxCxCyWH& b);

// Dense row-major matrix of doubles, used for cost and overlap matrices.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  bool empty() const { return rows == 0 || cols == 0; }
  Matrix transposed() const;
};

struct PairwiseCosts {
  Matrix l1;         // N_pred x N_gt
  Matrix giou_cost;  // -giou
};

// Throws std::invalid_argument for an empty prediction set.
PairwiseCosts pairwise_cost_matrices(std::span<const BoxCxCyWH> preds, std::span<const BoxCxCyWH> gts);

Matrix pairwise_iou(std::span<const BoxCxCyWH> a, std::span<const BoxCxCyWH> b);

// Greedy suppression in descending score order (ties: lower index first).
// Returns kept indices in that order.
std::vector<int> nms(std::span<const BoxCxCyWH> boxes, std::span<const double> scores, double iou_threshold);

}  // namespace dsdet::geometry
