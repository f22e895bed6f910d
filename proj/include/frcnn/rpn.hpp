#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "frcnn/anchors.hpp"
#include "frcnn/assignment.hpp"
#include "frcnn/layers.hpp"

namespace frcnn {

/// 3x3 conv trunk + ReLU with sibling 1x1 cls/reg convolutions, slid over
/// the feature map. Output channels are anchor-major: anchor a owns cls
/// channels [a*cls_per_anchor, (a+1)*cls_per_anchor) and likewise for reg,
/// with unshared weights per anchor.
///
/// The proposal network uses (2, 4) per anchor; the dense one-stage
/// detector reuses this class with (C+1, 4C).
template <class T>
class SlidingHead {
 public:
  struct Output {
    Var<T> cls;
    Var<T> reg;
  };

  SlidingHead() = default;
  SlidingHead(const std::string& prefix, std::size_t in_channels,
              std::size_t head_dim, std::size_t k, std::size_t cls_per_anchor,
              std::size_t reg_per_anchor, Rng& rng);

  Output forward(const Var<T>& features) const;

  std::size_t k() const { return k_; }
  std::size_t cls_per_anchor() const { return cls_per_anchor_; }
  std::size_t reg_per_anchor() const { return reg_per_anchor_; }
  std::size_t in_channels() const { return trunk_.in_channels(); }
  std::size_t cls_channels() const { return cls_.out_channels(); }
  std::size_t reg_channels() const { return reg_.out_channels(); }
  ParamList<T> params();
  void set_trainable(bool on);

 private:
  Conv2d<T> trunk_;
  Conv2d<T> cls_;
  Conv2d<T> reg_;
  std::size_t k_ = 0;
  std::size_t cls_per_anchor_ = 0;
  std::size_t reg_per_anchor_ = 0;
};

/// Proposal head: 2k objectness scores (two-class softmax per anchor, index
/// 1 = object) and 4k deltas. Params are named rpn.trunk.*, rpn.cls.*,
/// rpn.reg.*.
template <class T>
SlidingHead<T> make_rpn_head(std::size_t in_channels, std::size_t head_dim,
                             std::size_t k, Rng& rng);

template <class T>
using RpnHead = SlidingHead<T>;

/// Balance and normalizers of the proposal loss. n_reg <= 0 means "the
/// number of anchor locations" (feature H * W), recomputed per image.
struct LossWeights {
  double lambda = 10.0;
  double n_cls = 256.0;
  double n_reg = 0.0;

  void validate() const;
};

template <class T>
struct RpnLoss {
  Var<T> total;  // cls + lambda * reg
  Var<T> cls;    // (1/N_cls) sum over sampled anchors of log loss
  Var<T> reg;    // (1/N_reg) sum over positive anchors of smooth-L1, unweighted
};

/// cls_scores: 2k x H x W, reg_deltas: 4k x H x W, targets indexed like the
/// anchor set over the same grid. Throws std::runtime_error when nothing is
/// sampled.
template <class T>
RpnLoss<T> rpn_loss(const Var<T>& cls_scores, const Var<T>& reg_deltas,
                    const RpnTargets& targets, const LossWeights& w);

struct ProposalParams {
  double nms_iou = 0.7;
  std::size_t pre_nms_top = 6000;
  std::size_t post_nms_top = 300;
  double min_size = 2.0;
  /// Ablation switches. Without reg the proposals are the (clipped) anchors;
  /// without cls, post_nms_top boxes are drawn at random, unranked, without
  /// NMS, and carry score 0.
  bool use_reg = true;
  bool use_cls = true;

  void validate() const;
  static ProposalParams train_default();
  static ProposalParams test_default();
};

/// Objectness probability per anchor, anchor-set order.
template <class T>
std::vector<double> objectness(const Tensor<T>& cls_scores);

/// Score, decode (all anchors, cross-boundary included), clip, drop boxes
/// thinner than min_size, keep pre_nms_top, NMS, keep post_nms_top.
/// `rng` is only consulted when use_cls is off.
template <class T>
std::vector<ScoredBox> generate_proposals(const Tensor<T>& cls_scores,
                                          const Tensor<T>& reg_deltas,
                                          const AnchorSet& anchors, double image_w,
                                          double image_h, const ProposalParams& p,
                                          Rng* rng = nullptr);

}  // namespace frcnn
