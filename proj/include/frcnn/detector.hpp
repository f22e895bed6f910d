#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "frcnn/boxes.hpp"
#include "frcnn/layers.hpp"

namespace frcnn {

struct DetectorConfig {
  std::size_t num_classes = 3;  // foreground classes, background excluded
  std::size_t pool_size = 6;
  std::size_t hidden = 256;
};

/// Second stage: RoI max pooling, fc1/fc2 with ReLU, sibling cls (C+1,
/// index 0 = background) and per-class reg (4C) layers. Params are named
/// det.fc1.*, det.fc2.*, det.cls.*, det.reg.*.
template <class T>
class DetectorHead {
 public:
  struct Output {
    Var<T> logits;      // N x (C+1)
    Var<T> deltas;      // N x 4C, class c >= 1 in columns [4(c-1), 4c)
    Tensor<T> probs;    // softmax of logits
  };

  DetectorHead() = default;
  DetectorHead(const DetectorConfig& cfg, std::size_t feature_channels, Rng& rng);

  /// `proposals` in image pixels; features have the given stride.
  Output forward(const Var<T>& features, std::span<const Box> proposals,
                 double stride) const;

  std::size_t num_classes() const { return num_classes_; }
  std::size_t pool_size() const { return pool_size_; }
  ParamList<T> params();
  void set_trainable(bool on);

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
  Linear<T> cls_;
  Linear<T> reg_;
  std::size_t num_classes_ = 0;
  std::size_t pool_size_ = 0;
  std::size_t feature_channels_ = 0;
};

struct RoiSampleConfig {
  std::size_t rois_per_image = 64;
  double fg_fraction = 0.25;
  double fg_iou = 0.5;
  double bg_iou_lo = 0.0;
  double bg_iou_hi = 0.5;

  void validate() const;
  std::size_t max_foreground() const;
};

/// Training RoIs for one image. labels[i] in 0..C (0 = background);
/// targets[i] = encode(matched gt, rois[i]) for foreground rows.
struct RoiBatch {
  std::vector<Box> rois;
  std::vector<int> labels;
  std::vector<BoxDelta> targets;

  std::size_t size() const { return rois.size(); }
  std::size_t count_foreground() const;
};

/// Appends gt boxes to the candidates, then samples up to fg_fraction *
/// rois_per_image foreground (IoU >= fg_iou) and fills with background
/// (IoU in [bg_iou_lo, bg_iou_hi)). Zero-area candidates are dropped.
RoiBatch sample_rois(std::span<const Box> proposals, std::span<const Box> gt_boxes,
                     std::span<const int> gt_classes, const RoiSampleConfig& cfg,
                     Rng& rng);

/// Same sampling over a fixed candidate set without appending gt (used for
/// dense windows). Returns indices into `candidates` plus labels/targets.
struct IndexedRoiBatch {
  std::vector<std::size_t> index;
  std::vector<int> labels;
  std::vector<BoxDelta> targets;
};
IndexedRoiBatch sample_candidates(std::span<const Box> candidates,
                                  std::span<const char> eligible,
                                  std::span<const Box> gt_boxes,
                                  std::span<const int> gt_classes,
                                  const RoiSampleConfig& cfg, Rng& rng);

template <class T>
struct DetectorLoss {
  Var<T> total;  // cls + reg, 1:1
  Var<T> cls;    // mean log loss over the batch
  Var<T> reg;    // mean over foreground rows of smooth-L1 on the matched slice
};

/// logits N x (C+1), deltas N x 4C. Only the matched class's 4-slice of a
/// foreground row enters the regression term.
template <class T>
DetectorLoss<T> detector_loss(const Var<T>& logits, const Var<T>& deltas,
                              std::span<const int> labels,
                              std::span<const BoxDelta> targets);

struct DetectParams {
  double score_thresh = 0.05;
  double nms_iou = 0.3;
  std::size_t max_per_image = 100;
};

/// Per class c >= 1: decode class-c deltas against the proposals, clip,
/// drop scores below the threshold, class-wise NMS; then the global top
/// max_per_image by score. `candidates` (optional) receives the number of
/// class-specific boxes decoded before thresholding.
template <class T>
std::vector<ScoredBox> detect(const Tensor<T>& probs, const Tensor<T>& deltas,
                              std::span<const Box> proposals, double image_w,
                              double image_h, const DetectParams& p,
                              std::size_t* candidates = nullptr);

}  // namespace frcnn
