#include "frcnn/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frcnn {

void AnchorConfig::validate() const {
  if (scales.empty() || ratios.empty())
    throw std::invalid_argument("anchor config needs at least one scale and ratio");
  for (double s : scales)
    if (!(s > 0.0)) throw std::invalid_argument("anchor scales must be > 0");
  for (double r : ratios)
    if (!(r > 0.0)) throw std::invalid_argument("anchor ratios must be > 0");
  if (!(stride >= 1.0)) throw std::invalid_argument("anchor stride must be >= 1");
}

AnchorConfig AnchorConfig::paper_default() {
  return {{128.0, 256.0, 512.0}, {0.5, 1.0, 2.0}, 16.0};
}

AnchorConfig AnchorConfig::toy_default() { return {}; }

std::size_t AnchorSet::count_inside() const {
  return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), 1));
}

std::vector<Box> base_anchors(const AnchorConfig& cfg) {
  cfg.validate();
  std::vector<Box> out;
  out.reserve(cfg.k());
  for (double s : cfg.scales) {
    for (double r : cfg.ratios) {
      const double root = std::sqrt(r);
      out.push_back(Box::from_center(0.0, 0.0, s * root, s / root));
    }
  }
  return out;
}

AnchorSet grid_anchors(const AnchorConfig& cfg, std::size_t feature_w,
                       std::size_t feature_h) {
  if (feature_w == 0 || feature_h == 0)
    throw std::invalid_argument("grid_anchors: feature grid must be non-empty");
  const std::vector<Box> base = base_anchors(cfg);
  AnchorSet set;
  set.feature_w = feature_w;
  set.feature_h = feature_h;
  set.k = base.size();
  set.anchors.reserve(feature_w * feature_h * base.size());
  for (std::size_t i = 0; i < feature_h; ++i) {
    const double cy = (static_cast<double>(i) + 0.5) * cfg.stride;
    for (std::size_t j = 0; j < feature_w; ++j) {
      const double cx = (static_cast<double>(j) + 0.5) * cfg.stride;
      for (const Box& b : base) set.anchors.push_back(b.translated(cx, cy));
    }
  }
  return set;
}

std::vector<char> inside_mask(const AnchorSet& set, double image_w,
                              double image_h) {
  if (!(image_w > 0.0) || !(image_h > 0.0))
    throw std::invalid_argument("inside_mask: image dimensions must be > 0");
  std::vector<char> mask(set.anchors.size());
  for (std::size_t n = 0; n < set.anchors.size(); ++n) {
    const Box& a = set.anchors[n];
    mask[n] = a.x1 >= 0.0 && a.y1 >= 0.0 && a.x2 <= image_w && a.y2 <= image_h;
  }
  return mask;
}

AnchorSet anchors_for_image(const AnchorConfig& cfg, std::size_t feature_w,
                            std::size_t feature_h, double image_w,
                            double image_h) {
  AnchorSet set = grid_anchors(cfg, feature_w, feature_h);
  set.inside = inside_mask(set, image_w, image_h);
  return set;
}

}  // namespace frcnn
