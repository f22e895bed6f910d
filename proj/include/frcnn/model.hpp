#pragma once

#include <vector>

#include "frcnn/anchors.hpp"
#include "frcnn/assignment.hpp"
#include "frcnn/backbone.hpp"
#include "frcnn/dataio.hpp"
#include "frcnn/detector.hpp"
#include "frcnn/evaluation.hpp"
#include "frcnn/onestage.hpp"
#include "frcnn/rpn.hpp"

namespace frcnn {

/// Every architectural and pipeline knob of the detector.
struct ModelConfig {
  AnchorConfig anchors;
  BackboneConfig backbone;
  std::size_t head_dim = 64;
  DetectorConfig detector;
  LossWeights loss;
  AssignConfig assign;
  ProposalParams train_proposals = ProposalParams::train_default();
  ProposalParams test_proposals = ProposalParams::test_default();
  RoiSampleConfig roi;
  DetectParams detect;
  RoiSampleConfig dense_roi{256, 0.25, 0.5, 0.0, 0.5};

  /// Throws std::invalid_argument when the pieces do not fit together.
  void validate() const;
};

/// Shared backbone with the proposal head and the region-wise detector.
struct FasterRcnn {
  ModelConfig cfg;
  Backbone<float> backbone;
  RpnHead<float> rpn;
  DetectorHead<float> det;

  static FasterRcnn create(const ModelConfig& cfg, Rng& init_rng);

  ParamList<float> params();
  std::vector<NamedTensor> export_tensors();
  void import_tensors(const std::vector<NamedTensor>& tensors);
};

/// Backbone with the dense class-specific sliding-window head.
struct OneStageModel {
  ModelConfig cfg;
  Backbone<float> backbone;
  SlidingHead<float> dense;

  static OneStageModel create(const ModelConfig& cfg, Rng& init_rng);

  ParamList<float> params();
  std::vector<NamedTensor> export_tensors();
  void import_tensors(const std::vector<NamedTensor>& tensors);
};

/// Anchors over a feature map of the given grid for an image of the given
/// size, with the inside mask applied.
AnchorSet image_anchors(const AnchorConfig& cfg, const Shape& feature_shape,
                        std::size_t image_w, std::size_t image_h);

struct RpnOutputs {
  Tensor<float> features;
  Tensor<float> cls;
  Tensor<float> reg;
  AnchorSet anchors;
};

/// Inference-only forward of backbone and proposal head.
RpnOutputs run_rpn(const FasterRcnn& model, const Sample& sample);

std::vector<ScoredBox> propose(const FasterRcnn& model, const Sample& sample,
                               const ProposalParams& params, Rng* rng = nullptr);

/// Full two-stage inference with test-time proposals.
std::vector<ScoredBox> detect_image(const FasterRcnn& model, const Sample& sample);

std::vector<ScoredBox> detect_image(const OneStageModel& model, const Sample& sample,
                                    std::size_t* candidates = nullptr);

/// Per-stage wall-clock medians of two-stage inference over data[n_warmup ..
/// n_warmup + n_timed), cycling through the data when it is shorter.
TimingReport bench(const FasterRcnn& model, std::span<const Sample> data,
                   std::size_t n_warmup, std::size_t n_timed);

}  // namespace frcnn
