#include "frcnn/assignment.hpp"

#include <algorithm>
#include <stdexcept>

namespace frcnn {

std::size_t RpnTargets::count(AnchorLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::size_t RpnTargets::count_sampled() const {
  return static_cast<std::size_t>(
      std::count(sample_mask.begin(), sample_mask.end(), 1));
}

std::size_t RpnTargets::count_sampled(AnchorLabel label) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (sample_mask[i] && labels[i] == label) ++n;
  return n;
}

RpnTargets assign_labels(const AnchorSet& anchors, std::span<const Box> gt,
                         double pos_iou, double neg_iou) {
  const std::size_t n = anchors.size();
  const bool have_mask = !anchors.inside.empty();
  if (have_mask && anchors.inside.size() != n)
    throw std::invalid_argument("assign_labels: inside mask length mismatch");

  RpnTargets t;
  t.labels.assign(n, AnchorLabel::kIgnore);
  t.target_deltas.assign(n, BoxDelta{});
  t.matched_gt.assign(n, -1);
  t.sample_mask.assign(n, 0);

  auto is_inside = [&](std::size_t a) { return !have_mask || anchors.inside[a]; };

  if (gt.empty()) {
    for (std::size_t a = 0; a < n; ++a)
      if (is_inside(a)) t.labels[a] = AnchorLabel::kNegative;
    return t;
  }

  // Per anchor: best gt (ties -> lowest gt index). Per gt: best IoU over
  // inside anchors.
  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best(gt.size(), 0.0);
  std::vector<double> ious(gt.size());
  for (std::size_t a = 0; a < n; ++a) {
    if (!is_inside(a)) continue;
    const Box& anchor = anchors.anchors[a];
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(anchor, gt[g]);
      if (best_gt[a] < 0 || v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      gt_best[g] = std::max(gt_best[g], v);
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    if (!is_inside(a)) continue;
    if (best_iou[a] < neg_iou) t.labels[a] = AnchorLabel::kNegative;
    if (best_iou[a] >= pos_iou) t.labels[a] = AnchorLabel::kPositive;
  }

  // Rule (i): every anchor attaining a gt's maximum IoU is positive. A gt
  // with no overlapping inside anchor gets no positive.
  for (std::size_t a = 0; a < n; ++a) {
    if (!is_inside(a)) continue;
    const Box& anchor = anchors.anchors[a];
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_best[g] <= 0.0) continue;
      if (iou(anchor, gt[g]) == gt_best[g]) {
        t.labels[a] = AnchorLabel::kPositive;
        break;
      }
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    if (t.labels[a] != AnchorLabel::kPositive) continue;
    t.matched_gt[a] = best_gt[a];
    t.target_deltas[a] = encode(gt[static_cast<std::size_t>(best_gt[a])],
                                anchors.anchors[a]);
  }
  return t;
}

std::vector<std::size_t> sample_without_replacement(
    std::vector<std::size_t> pool, std::size_t n, Rng& rng) {
  const std::size_t take = std::min(n, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

void sample_minibatch(RpnTargets& targets, std::size_t batch,
                      std::size_t max_pos, Rng& rng) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t a = 0; a < targets.size(); ++a) {
    if (targets.labels[a] == AnchorLabel::kPositive) pos.push_back(a);
    if (targets.labels[a] == AnchorLabel::kNegative) neg.push_back(a);
  }
  if (pos.empty() && neg.empty())
    throw std::runtime_error(
        "sample_minibatch: image has no labeled anchors, unusable for training");

  targets.sample_mask.assign(targets.size(), 0);
  const auto chosen_pos =
      sample_without_replacement(std::move(pos), std::min(batch, max_pos), rng);
  const auto chosen_neg =
      sample_without_replacement(std::move(neg), batch - chosen_pos.size(), rng);
  for (std::size_t a : chosen_pos) targets.sample_mask[a] = 1;
  for (std::size_t a : chosen_neg) targets.sample_mask[a] = 1;
}

}  // namespace frcnn
