#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace frcnn {

/// Axis-aligned box in continuous image coordinates, origin top-left.
/// Half-open convention: area = (x2 - x1) * (y2 - y1), no "+1" pixel offset.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x2 >= x1 && y2 >= y1; }

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  Box translated(double dx, double dy) const {
    return {x1 + dx, y1 + dy, x2 + dx, y2 + dy};
  }
  Box scaled(double s) const { return {x1 * s, y1 * s, x2 * s, y2 * s}; }

  bool operator==(const Box&) const = default;
};

/// Regression offsets relative to a reference box. tw, th are log size ratios.
struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;

  bool operator==(const BoxDelta&) const = default;
};

/// A box with a probability attached. class_id 0 means class-agnostic
/// objectness; detections use 1..C.
struct ScoredBox {
  Box box;
  double score = 0.0;
  int class_id = 0;
};

/// exp() guard for decoded sizes: |tw|, |th| are clamped to log(1000/16).
inline const double kMaxLogSizeRatio = std::log(1000.0 / 16.0);

double intersection_area(const Box& a, const Box& b);

/// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

/// Row-major |a| x |b| matrix of IoU values.
std::vector<double> iou_matrix(std::span<const Box> a, std::span<const Box> b);

/// Throws std::invalid_argument if gt or anchor has zero width or height.
BoxDelta encode(const Box& gt, const Box& anchor);

/// Inverse of encode. tw, th are clamped to +-kMaxLogSizeRatio first.
Box decode(const BoxDelta& delta, const Box& anchor);

/// Clamp to [0, image_w] x [0, image_h].
Box clip(const Box& b, double image_w, double image_h);

/// Greedy NMS. Items are visited by descending score (ties by ascending
/// index); a candidate is suppressed when its IoU with a kept box is strictly
/// greater than `iou_threshold`. Returns kept indices in visiting order.
/// `max_keep` stops early once that many boxes have been kept (0 = no cap).
std::vector<std::size_t> nms(std::span<const ScoredBox> items,
                             double iou_threshold, std::size_t max_keep = 0);

/// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> order_by_score(std::span<const ScoredBox> items);

}  // namespace frcnn
