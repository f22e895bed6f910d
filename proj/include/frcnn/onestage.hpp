#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "frcnn/anchors.hpp"
#include "frcnn/detector.hpp"
#include "frcnn/rpn.hpp"

namespace frcnn {

/// Dense sliding windows for the one-stage comparison; same grid machinery
/// as the proposal anchors.
using DenseWindowConfig = AnchorConfig;

/// Class-specific sliding-window head: the proposal head's class with
/// (C+1) scores and 4C deltas per window. Params are named dense.*.
template <class T>
SlidingHead<T> make_dense_head(std::size_t in_channels, std::size_t head_dim,
                               std::size_t k, std::size_t num_classes, Rng& rng);

/// Training loss over sampled windows: mean log loss over the sampled rows
/// plus mean smooth-L1 over foreground rows on their class slice.
/// Windows crossing the image boundary are never sampled.
template <class T>
DetectorLoss<T> onestage_loss(const Var<T>& cls, const Var<T>& reg,
                              const AnchorSet& windows, std::span<const Box> gt_boxes,
                              std::span<const int> gt_classes,
                              const RoiSampleConfig& cfg, Rng& rng);

/// Class-specific scores and boxes straight from every window, class-wise
/// NMS, no proposal stage. `candidates` receives the number of
/// class-specific boxes considered before NMS.
template <class T>
std::vector<ScoredBox> one_stage_detect(const Tensor<T>& cls, const Tensor<T>& reg,
                                        const AnchorSet& windows, double image_w,
                                        double image_h, const DetectParams& p,
                                        std::size_t* candidates = nullptr);

}  // namespace frcnn
