#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "frcnn/anchors.hpp"
#include "frcnn/boxes.hpp"
#include "frcnn/random.hpp"

namespace frcnn {

enum class AnchorLabel : std::int8_t { kIgnore = -1, kNegative = 0, kPositive = 1 };

/// Per-anchor training targets for the proposal network.
struct RpnTargets {
  std::vector<AnchorLabel> labels;
  std::vector<BoxDelta> target_deltas;  // meaningful where label is positive
  std::vector<int> matched_gt;          // -1 where unmatched
  std::vector<char> sample_mask;        // anchors in the current minibatch

  std::size_t size() const { return labels.size(); }
  std::size_t count(AnchorLabel label) const;
  std::size_t count_sampled() const;
  std::size_t count_sampled(AnchorLabel label) const;
};

struct AssignConfig {
  double pos_iou = 0.7;
  double neg_iou = 0.3;
  std::size_t batch = 256;
  std::size_t max_pos = 128;
};

/// Labels anchors against ground truth. Anchors outside the image (per
/// anchors.inside) are ignored before any matching. Positive: argmax anchor
/// of some gt (all tied argmaxes), or IoU >= pos_iou with any gt. Negative:
/// max IoU < neg_iou and not positive.
RpnTargets assign_labels(const AnchorSet& anchors, std::span<const Box> gt,
                         double pos_iou = 0.7, double neg_iou = 0.3);

/// Uniformly samples up to max_pos positives and fills the rest of `batch`
/// with negatives. Throws std::runtime_error if no anchor is labeled.
void sample_minibatch(RpnTargets& targets, std::size_t batch,
                      std::size_t max_pos, Rng& rng);

/// Uniform sample of min(n, pool.size()) distinct elements of `pool`,
/// returned in the order drawn (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(
    std::vector<std::size_t> pool, std::size_t n, Rng& rng);

}  // namespace frcnn
