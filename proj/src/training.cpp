#include "frcnn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <stdexcept>

#include "frcnn/checkpoint.hpp"

namespace frcnn {

void TrainSchedule::validate() const {
  if (lr_drop_at > total_iters)
    throw std::invalid_argument("schedule: lr_drop_at " + std::to_string(lr_drop_at) +
                                " exceeds total_iters " + std::to_string(total_iters));
  sgd_at(0).validate();
}

double TrainSchedule::lr_at(std::size_t iteration) const {
  return iteration < lr_drop_at ? lr : lr * 0.1;
}

SgdConfig TrainSchedule::sgd_at(std::size_t iteration) const {
  return SgdConfig{lr_at(iteration), momentum, weight_decay};
}

TrainSchedule TrainSchedule::make(std::size_t iters, double lr, std::uint64_t seed) {
  TrainSchedule s;
  s.total_iters = iters;
  s.lr = lr;
  s.lr_drop_at = iters * 3 / 4;
  s.seed = seed;
  return s;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void warn_skip(const char* what, const Sample& s, const std::exception& e) {
  std::cerr << "warning: " << what << ": skipping image " << s.id << ": " << e.what() << "\n";
}

Var<float> input_of(const Sample& s) { return Var<float>::constant(s.image); }

}  // namespace

std::string LossLog::csv() const {
  std::string out = "iteration,lr";
  if (has_rpn) out += ",loss_cls,loss_reg";
  if (has_det) out += ",loss_det_cls,loss_det_reg";
  out += "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.iteration) + "," + num(r.lr);
    if (has_rpn) out += "," + num(r.loss_cls) + "," + num(r.loss_reg);
    if (has_det) out += "," + num(r.loss_det_cls) + "," + num(r.loss_det_reg);
    out += "\n";
  }
  return out;
}

double LossLog::mean(double LossRecord::*column, std::size_t begin, std::size_t end) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = begin; i < std::min(end, rows.size()); ++i) {
    const double v = rows[i].*column;
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : LossRecord::kNone;
}

ImageOrder::ImageOrder(std::size_t n, Rng rng) : order_(n), pos_(n), rng_(rng) {
  if (n == 0) throw std::invalid_argument("training: dataset is empty");
  for (std::size_t i = 0; i < n; ++i) order_[i] = i;
}

std::size_t ImageOrder::next() {
  if (pos_ == order_.size()) {
    for (std::size_t i = order_.size() - 1; i > 0; --i)
      std::swap(order_[i], order_[rng_.below(i + 1)]);
    pos_ = 0;
  }
  return order_[pos_++];
}

LossLog train_rpn(std::span<const Sample> data, TrainState& state,
                  const TrainSchedule& schedule) {
  schedule.validate();
  FasterRcnn& m = state.model;
  const auto t0 = Clock::now();
  ImageOrder order(data.size(), Rng::stream(schedule.seed, "data"));
  Rng sampling = Rng::stream(schedule.seed, "sampling");

  m.backbone.set_trainable(!state.shared_frozen);
  ParamList<float> params = m.backbone.params();
  for (auto* p : m.rpn.params()) params.push_back(p);

  LossLog log;
  log.has_rpn = true;
  for (std::size_t it = 0; it < schedule.total_iters; ++it) {
    const Sample& s = data[order.next()];
    LossRecord rec;
    rec.iteration = it;
    rec.lr = schedule.lr_at(it);
    const Var<float> feats = m.backbone.forward(input_of(s));
    const auto head = m.rpn.forward(feats);
    const AnchorSet anchors = image_anchors(m.cfg.anchors, feats.shape(), s.width, s.height);
    RpnTargets targets =
        assign_labels(anchors, s.boxes, m.cfg.assign.pos_iou, m.cfg.assign.neg_iou);
    try {
      sample_minibatch(targets, m.cfg.assign.batch, m.cfg.assign.max_pos, sampling);
    } catch (const std::runtime_error& e) {
      warn_skip("train_rpn", s, e);
      ++log.skipped;
      log.rows.push_back(rec);
      continue;
    }
    const auto loss = rpn_loss(head.cls, head.reg, targets, m.cfg.loss);
    backward(loss.total);
    sgd_step<float>(params, schedule.sgd_at(it));
    rec.loss_cls = loss.cls.item();
    rec.loss_reg = loss.reg.item();
    log.rows.push_back(rec);
    ++state.iteration;
  }
  log.seconds = seconds_since(t0);
  return log;
}

LossLog train_detector(std::span<const Sample> data,
                       std::span<const std::vector<Box>> proposals, TrainState& state,
                       const TrainSchedule& schedule) {
  schedule.validate();
  if (proposals.size() != data.size())
    throw std::invalid_argument("train_detector: proposal lists do not match the dataset");
  FasterRcnn& m = state.model;
  const auto t0 = Clock::now();
  ImageOrder order(data.size(), Rng::stream(schedule.seed, "data"));
  Rng sampling = Rng::stream(schedule.seed, "sampling");

  m.backbone.set_trainable(!state.shared_frozen);
  ParamList<float> params = m.backbone.params();
  for (auto* p : m.det.params()) params.push_back(p);
  const double stride = static_cast<double>(m.backbone.stride());

  LossLog log;
  log.has_det = true;
  for (std::size_t it = 0; it < schedule.total_iters; ++it) {
    const std::size_t idx = order.next();
    const Sample& s = data[idx];
    LossRecord rec;
    rec.iteration = it;
    rec.lr = schedule.lr_at(it);
    const RoiBatch batch = sample_rois(proposals[idx], s.boxes, s.classes, m.cfg.roi, sampling);
    if (batch.size() == 0) {
      std::cerr << "warning: train_detector: no RoIs for image " << s.id << "\n";
      ++log.skipped;
      log.rows.push_back(rec);
      continue;
    }
    const Var<float> feats = m.backbone.forward(input_of(s));
    const auto out = m.det.forward(feats, batch.rois, stride);
    const auto loss = detector_loss(out.logits, out.deltas, batch.labels, batch.targets);
    backward(loss.total);
    sgd_step<float>(params, schedule.sgd_at(it));
    rec.loss_det_cls = loss.cls.item();
    rec.loss_det_reg = loss.reg.item();
    log.rows.push_back(rec);
    ++state.iteration;
  }
  log.seconds = seconds_since(t0);
  return log;
}

std::vector<std::vector<Box>> proposals_for(const FasterRcnn& model,
                                            std::span<const Sample> data,
                                            const ProposalParams& params) {
  std::vector<std::vector<Box>> out;
  out.reserve(data.size());
  for (const Sample& s : data) {
    std::vector<Box> boxes;
    for (const auto& p : propose(model, s, params)) boxes.push_back(p.box);
    out.push_back(std::move(boxes));
  }
  return out;
}

std::uint64_t backbone_checksum(FasterRcnn& model) {
  const auto ps = model.backbone.params();
  return checksum(export_params<float>(ps));
}

AlternatingResult alternate_4step(std::span<const Sample> data, const ModelConfig& cfg,
                                  const std::array<TrainSchedule, 4>& schedules,
                                  std::uint64_t init_seed, const StepHook& on_step) {
  AlternatingResult r;
  auto finish = [&](int step, TrainState& st, LossLog log) {
    r.backbone_after[step - 1] = backbone_checksum(st.model);
    if (on_step) on_step(step, st.model, log);
    r.logs[step - 1] = std::move(log);
  };

  // Step 1: RPN with its own backbone.
  Rng init1 = Rng::stream(init_seed, "init.step1");
  TrainState rpn_state{FasterRcnn::create(cfg, init1)};
  finish(1, rpn_state, train_rpn(data, rpn_state, schedules[0]));

  // Step 2: detector on a fresh backbone, fed by step-1 proposals.
  Rng init2 = Rng::stream(init_seed, "init.step2");
  TrainState det_state{FasterRcnn::create(cfg, init2)};
  {
    const auto props = proposals_for(rpn_state.model, data, cfg.train_proposals);
    finish(2, det_state, train_detector(data, props, det_state, schedules[1]));
  }

  // Step 3: the detector's backbone is shared and frozen; the step-1 RPN head
  // is fine-tuned on top of it.
  det_state.model.rpn = rpn_state.model.rpn;
  det_state.shared_frozen = true;
  finish(3, det_state, train_rpn(data, det_state, schedules[2]));

  // Step 4: fine-tune the detector head on the new proposals.
  {
    const auto props = proposals_for(det_state.model, data, cfg.train_proposals);
    finish(4, det_state, train_detector(data, props, det_state, schedules[3]));
  }
  r.state = std::move(det_state);
  return r;
}

JointResult joint_train(std::span<const Sample> data, const ModelConfig& cfg,
                        const TrainSchedule& schedule, std::uint64_t init_seed) {
  schedule.validate();
  Rng init = Rng::stream(init_seed, "init.joint");
  JointResult r{TrainState{FasterRcnn::create(cfg, init)}, {}};
  FasterRcnn& m = r.state.model;
  const auto t0 = Clock::now();
  ImageOrder order(data.size(), Rng::stream(schedule.seed, "data"));
  Rng sampling = Rng::stream(schedule.seed, "sampling");
  ParamList<float> params = m.params();
  const double stride = static_cast<double>(m.backbone.stride());

  LossLog& log = r.log;
  log.has_rpn = log.has_det = true;
  for (std::size_t it = 0; it < schedule.total_iters; ++it) {
    const Sample& s = data[order.next()];
    LossRecord rec;
    rec.iteration = it;
    rec.lr = schedule.lr_at(it);
    const Var<float> feats = m.backbone.forward(input_of(s));
    const auto head = m.rpn.forward(feats);
    const AnchorSet anchors = image_anchors(cfg.anchors, feats.shape(), s.width, s.height);
    RpnTargets targets = assign_labels(anchors, s.boxes, cfg.assign.pos_iou, cfg.assign.neg_iou);
    try {
      sample_minibatch(targets, cfg.assign.batch, cfg.assign.max_pos, sampling);
    } catch (const std::runtime_error& e) {
      warn_skip("joint_train", s, e);
      ++log.skipped;
      log.rows.push_back(rec);
      continue;
    }
    const auto rl = rpn_loss(head.cls, head.reg, targets, cfg.loss);

    // Boxes come from plain tensor values, so no gradient reaches the
    // regression branch through the RoI coordinates.
    std::vector<Box> boxes;
    for (const auto& p : generate_proposals(head.cls.value(), head.reg.value(), anchors,
                                            double(s.width), double(s.height),
                                            cfg.train_proposals))
      boxes.push_back(p.box);
    const RoiBatch batch = sample_rois(boxes, s.boxes, s.classes, cfg.roi, sampling);
    if (batch.size() == 0) {
      backward(rl.total);
    } else {
      const auto out = m.det.forward(feats, batch.rois, stride);
      const auto dl = detector_loss(out.logits, out.deltas, batch.labels, batch.targets);
      backward(add(rl.total, dl.total));
      rec.loss_det_cls = dl.cls.item();
      rec.loss_det_reg = dl.reg.item();
    }
    sgd_step<float>(params, schedule.sgd_at(it));
    rec.loss_cls = rl.cls.item();
    rec.loss_reg = rl.reg.item();
    log.rows.push_back(rec);
    ++r.state.iteration;
  }
  log.seconds = seconds_since(t0);
  return r;
}

OneStageResult train_onestage(std::span<const Sample> data, const ModelConfig& cfg,
                              const TrainSchedule& schedule, std::uint64_t init_seed) {
  schedule.validate();
  Rng init = Rng::stream(init_seed, "init.onestage");
  OneStageResult r{OneStageModel::create(cfg, init), {}};
  OneStageModel& m = r.model;
  const auto t0 = Clock::now();
  ImageOrder order(data.size(), Rng::stream(schedule.seed, "data"));
  Rng sampling = Rng::stream(schedule.seed, "sampling");
  ParamList<float> params = m.params();

  LossLog& log = r.log;
  log.has_det = true;
  for (std::size_t it = 0; it < schedule.total_iters; ++it) {
    const Sample& s = data[order.next()];
    LossRecord rec;
    rec.iteration = it;
    rec.lr = schedule.lr_at(it);
    const Var<float> feats = m.backbone.forward(input_of(s));
    const auto head = m.dense.forward(feats);
    const AnchorSet windows = image_anchors(cfg.anchors, feats.shape(), s.width, s.height);
    DetectorLoss<float> loss;
    try {
      loss = onestage_loss(head.cls, head.reg, windows, s.boxes, s.classes, cfg.dense_roi,
                           sampling);
    } catch (const std::exception& e) {
      warn_skip("train_onestage", s, e);
      ++log.skipped;
      log.rows.push_back(rec);
      continue;
    }
    backward(loss.total);
    sgd_step<float>(params, schedule.sgd_at(it));
    rec.loss_det_cls = loss.cls.item();
    rec.loss_det_reg = loss.reg.item();
    log.rows.push_back(rec);
  }
  log.seconds = seconds_since(t0);
  return r;
}

}  // namespace frcnn
