#include "frcnn/boxes.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace frcnn {

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0 || inter <= 0.0) return 0.0;
  return inter / uni;
}

std::vector<double> iou_matrix(std::span<const Box> a,
                               std::span<const Box> b) {
  std::vector<double> out(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out[i * b.size() + j] = iou(a[i], b[j]);
  return out;
}

BoxDelta encode(const Box& gt, const Box& anchor) {
  if (!(anchor.width() > 0.0) || !(anchor.height() > 0.0))
    throw std::invalid_argument("encode: anchor has zero width or height");
  if (!(gt.width() > 0.0) || !(gt.height() > 0.0))
    throw std::invalid_argument(
        "encode: ground-truth box has zero width or height, no valid "
        "regression target");
  const double wa = anchor.width();
  const double ha = anchor.height();
  return {(gt.center_x() - anchor.center_x()) / wa,
          (gt.center_y() - anchor.center_y()) / ha,
          std::log(gt.width() / wa), std::log(gt.height() / ha)};
}

Box decode(const BoxDelta& delta, const Box& anchor) {
  if (!(anchor.width() > 0.0) || !(anchor.height() > 0.0))
    throw std::invalid_argument("decode: anchor has zero width or height");
  const double wa = anchor.width();
  const double ha = anchor.height();
  const double tw = std::clamp(delta.tw, -kMaxLogSizeRatio, kMaxLogSizeRatio);
  const double th = std::clamp(delta.th, -kMaxLogSizeRatio, kMaxLogSizeRatio);
  const double cx = anchor.center_x() + delta.tx * wa;
  const double cy = anchor.center_y() + delta.ty * ha;
  return Box::from_center(cx, cy, wa * std::exp(tw), ha * std::exp(th));
}

Box clip(const Box& b, double image_w, double image_h) {
  return {std::clamp(b.x1, 0.0, image_w), std::clamp(b.y1, 0.0, image_h),
          std::clamp(b.x2, 0.0, image_w), std::clamp(b.y2, 0.0, image_h)};
}

std::vector<std::size_t> order_by_score(std::span<const ScoredBox> items) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return items[a].score > items[b].score;
                   });
  return order;
}

std::vector<std::size_t> nms(std::span<const ScoredBox> items,
                             double iou_threshold, std::size_t max_keep) {
  const std::vector<std::size_t> order = order_by_score(items);
  // Score-ordered structure-of-arrays so the suppression pass vectorizes.
  // The overlap test reaches the same decision as iou() > threshold.
  const std::size_t n = order.size();
  std::vector<double> x1(n), y1(n), x2(n), y2(n), area(n);
  std::vector<std::size_t> id(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Box& b = items[order[i]].box;
    x1[i] = b.x1;
    y1[i] = b.y1;
    x2[i] = b.x2;
    y2[i] = b.y2;
    area[i] = b.area();
    id[i] = order[i];
  }
  std::vector<char> dead(n, 0);
  std::vector<std::size_t> keep;
  for (std::size_t head = 0; head < n; ++head) {
    if (dead[head]) continue;
    keep.push_back(id[head]);
    if (max_keep != 0 && keep.size() >= max_keep) break;
    const double kx1 = x1[head], ky1 = y1[head], kx2 = x2[head], ky2 = y2[head];
    const double ka = area[head];
    for (std::size_t j = head + 1; j < n; ++j) {
      const double w = std::min(kx2, x2[j]) - std::max(kx1, x1[j]);
      const double h = std::min(ky2, y2[j]) - std::max(ky1, y1[j]);
      const double inter = std::max(w, 0.0) * std::max(h, 0.0);
      const double uni = ka + area[j] - inter;
      dead[j] |= (inter > 0.0) & (uni > 0.0) & (inter / uni > iou_threshold);
    }
  }
  return keep;
}

}  // namespace frcnn
