#pragma once

#include <cstddef>
#include <vector>

#include "frcnn/boxes.hpp"

namespace frcnn {

/// Anchor pyramid description. Scales are side lengths (area = scale^2),
/// ratios are width:height.
struct AnchorConfig {
  std::vector<double> scales{16.0, 32.0, 64.0};
  std::vector<double> ratios{0.5, 1.0, 2.0};
  double stride = 8.0;

  std::size_t k() const { return scales.size() * ratios.size(); }

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;

  /// 128^2, 256^2, 512^2 areas, ratios 1:2, 1:1, 2:1, stride 16.
  static AnchorConfig paper_default();
  /// 16, 32, 64 sides, same ratios, stride 8 (128x128 synthetic images).
  static AnchorConfig toy_default();
};

/// Anchors over a feature grid, row-major over cells with the anchor index
/// fastest: index = (i * feature_w + j) * k + a.
struct AnchorSet {
  std::vector<Box> anchors;
  std::vector<char> inside;  // empty until inside_mask() is applied
  std::size_t feature_w = 0;
  std::size_t feature_h = 0;
  std::size_t k = 0;

  std::size_t size() const { return anchors.size(); }
  std::size_t count_inside() const;
};

/// k boxes centered on the origin; scales outer, ratios inner.
std::vector<Box> base_anchors(const AnchorConfig& cfg);

/// Base anchors translated to ((j + 0.5) * stride, (i + 0.5) * stride).
AnchorSet grid_anchors(const AnchorConfig& cfg, std::size_t feature_w,
                       std::size_t feature_h);

/// True iff the anchor lies within [0, image_w] x [0, image_h].
std::vector<char> inside_mask(const AnchorSet& set, double image_w,
                              double image_h);

/// grid_anchors followed by inside_mask, stored on the set.
AnchorSet anchors_for_image(const AnchorConfig& cfg, std::size_t feature_w,
                            std::size_t feature_h, double image_w,
                            double image_h);

}  // namespace frcnn
