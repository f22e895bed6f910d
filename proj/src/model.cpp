#include "frcnn/model.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace frcnn {

void ModelConfig::validate() const {
  anchors.validate();
  loss.validate();
  train_proposals.validate();
  test_proposals.validate();
  roi.validate();
  dense_roi.validate();
  if (std::abs(anchors.stride - static_cast<double>(backbone.stride())) > 1e-12)
    throw std::invalid_argument("anchor stride " + std::to_string(anchors.stride) +
                                " differs from backbone stride " +
                                std::to_string(backbone.stride()));
  if (assign.max_pos > assign.batch)
    throw std::invalid_argument("assignment: max_pos exceeds batch");
  if (!(assign.neg_iou <= assign.pos_iou))
    throw std::invalid_argument("assignment: neg_iou must not exceed pos_iou");
}

FasterRcnn FasterRcnn::create(const ModelConfig& cfg, Rng& init_rng) {
  cfg.validate();
  FasterRcnn m;
  m.cfg = cfg;
  m.backbone = Backbone<float>(cfg.backbone, init_rng);
  m.rpn = make_rpn_head<float>(cfg.backbone.out_channels(), cfg.head_dim, cfg.anchors.k(),
                               init_rng);
  m.det = DetectorHead<float>(cfg.detector, cfg.backbone.out_channels(), init_rng);
  return m;
}

ParamList<float> FasterRcnn::params() {
  ParamList<float> out = backbone.params();
  for (auto* p : rpn.params()) out.push_back(p);
  for (auto* p : det.params()) out.push_back(p);
  return out;
}

std::vector<NamedTensor> FasterRcnn::export_tensors() {
  const auto ps = params();
  return export_params<float>(ps);
}

void FasterRcnn::import_tensors(const std::vector<NamedTensor>& tensors) {
  const auto ps = params();
  import_params<float>(ps, tensors);
}

OneStageModel OneStageModel::create(const ModelConfig& cfg, Rng& init_rng) {
  cfg.validate();
  OneStageModel m;
  m.cfg = cfg;
  m.backbone = Backbone<float>(cfg.backbone, init_rng);
  m.dense = make_dense_head<float>(cfg.backbone.out_channels(), cfg.head_dim,
                                   cfg.anchors.k(), cfg.detector.num_classes, init_rng);
  return m;
}

ParamList<float> OneStageModel::params() {
  ParamList<float> out = backbone.params();
  for (auto* p : dense.params()) out.push_back(p);
  return out;
}

std::vector<NamedTensor> OneStageModel::export_tensors() {
  const auto ps = params();
  return export_params<float>(ps);
}

void OneStageModel::import_tensors(const std::vector<NamedTensor>& tensors) {
  const auto ps = params();
  import_params<float>(ps, tensors);
}

AnchorSet image_anchors(const AnchorConfig& cfg, const Shape& feature_shape,
                        std::size_t image_w, std::size_t image_h) {
  if (feature_shape.size() != 3) throw ShapeError("image_anchors: expected C x H x W features");
  return anchors_for_image(cfg, feature_shape[2], feature_shape[1], double(image_w),
                           double(image_h));
}

RpnOutputs run_rpn(const FasterRcnn& model, const Sample& sample) {
  NoGradGuard no_grad;
  const Var<float> feats = model.backbone.forward(Var<float>::constant(sample.image));
  const auto head = model.rpn.forward(feats);
  RpnOutputs out;
  out.anchors = image_anchors(model.cfg.anchors, feats.shape(), sample.width, sample.height);
  out.features = feats.value();
  out.cls = head.cls.value();
  out.reg = head.reg.value();
  return out;
}

std::vector<ScoredBox> propose(const FasterRcnn& model, const Sample& sample,
                               const ProposalParams& params, Rng* rng) {
  const RpnOutputs r = run_rpn(model, sample);
  return generate_proposals(r.cls, r.reg, r.anchors, double(sample.width),
                            double(sample.height), params, rng);
}

std::vector<ScoredBox> detect_image(const FasterRcnn& model, const Sample& sample) {
  const RpnOutputs r = run_rpn(model, sample);
  const auto proposals = generate_proposals(r.cls, r.reg, r.anchors, double(sample.width),
                                            double(sample.height), model.cfg.test_proposals);
  std::vector<Box> boxes;
  for (const auto& p : proposals) boxes.push_back(p.box);
  NoGradGuard no_grad;
  const auto out = model.det.forward(Var<float>::constant(r.features), boxes,
                                     double(model.backbone.stride()));
  return detect(out.probs, out.deltas.value(), boxes, double(sample.width),
                double(sample.height), model.cfg.detect);
}

std::vector<ScoredBox> detect_image(const OneStageModel& model, const Sample& sample,
                                    std::size_t* candidates) {
  NoGradGuard no_grad;
  const Var<float> feats = model.backbone.forward(Var<float>::constant(sample.image));
  const auto head = model.dense.forward(feats);
  const AnchorSet windows =
      image_anchors(model.cfg.anchors, feats.shape(), sample.width, sample.height);
  return one_stage_detect(head.cls.value(), head.reg.value(), windows, double(sample.width),
                          double(sample.height), model.cfg.detect, candidates);
}

TimingReport bench(const FasterRcnn& model, std::span<const Sample> data,
                   std::size_t n_warmup, std::size_t n_timed) {
  if (data.empty()) throw std::invalid_argument("bench: no images");
  if (n_timed == 0) throw std::invalid_argument("bench: n_timed must be positive");
  using Clock = std::chrono::steady_clock;
  const auto ms = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  NoGradGuard no_grad;
  std::vector<double> conv, proposal, region, total;
  std::size_t sink = 0;  // keeps results observable
  for (std::size_t i = 0; i < n_warmup + n_timed; ++i) {
    const Sample& s = data[i % data.size()];
    const auto t0 = Clock::now();
    const Var<float> feats = model.backbone.forward(Var<float>::constant(s.image));
    const auto t1 = Clock::now();
    const auto head = model.rpn.forward(feats);
    const AnchorSet anchors = image_anchors(model.cfg.anchors, feats.shape(), s.width, s.height);
    const auto props = generate_proposals(head.cls.value(), head.reg.value(), anchors,
                                          double(s.width), double(s.height),
                                          model.cfg.test_proposals);
    const auto t2 = Clock::now();
    std::vector<Box> boxes;
    for (const auto& p : props) boxes.push_back(p.box);
    const auto out = model.det.forward(feats, boxes, double(model.backbone.stride()));
    const auto dets = detect(out.probs, out.deltas.value(), boxes, double(s.width),
                             double(s.height), model.cfg.detect);
    const auto t3 = Clock::now();
    sink += dets.size();
    if (i < n_warmup) continue;
    conv.push_back(ms(t0, t1));
    proposal.push_back(ms(t1, t2));
    region.push_back(ms(t2, t3));
    total.push_back(ms(t0, t3));
  }
  (void)sink;
  TimingReport r;
  r.images = n_timed;
  r.conv_ms = median(conv);
  r.proposal_ms = median(proposal);
  r.region_ms = median(region);
  r.total_ms = median(total);
  r.images_per_second = r.total_ms > 0 ? 1000.0 / r.total_ms : 0.0;
  return r;
}

}  // namespace frcnn
