#include "frcnn/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "frcnn/assignment.hpp"

namespace frcnn {

template <class T>
DetectorHead<T>::DetectorHead(const DetectorConfig& cfg, std::size_t feature_channels,
                              Rng& rng)
    : num_classes_(cfg.num_classes),
      pool_size_(cfg.pool_size),
      feature_channels_(feature_channels) {
  if (cfg.num_classes == 0 || cfg.pool_size == 0 || cfg.hidden == 0)
    throw std::invalid_argument("detector: classes, pool size and width must be positive");
  const std::size_t pooled = feature_channels * cfg.pool_size * cfg.pool_size;
  // fc1/fc2 stand in for layers that would normally come pretrained.
  fc1_ = Linear<T>::make("det.fc1", pooled, cfg.hidden, he_stddev(pooled), rng);
  fc2_ = Linear<T>::make("det.fc2", cfg.hidden, cfg.hidden, he_stddev(cfg.hidden), rng);
  cls_ = Linear<T>::make("det.cls", cfg.hidden, cfg.num_classes + 1, kHeadInitStddev, rng);
  reg_ = Linear<T>::make("det.reg", cfg.hidden, 4 * cfg.num_classes, kHeadInitStddev, rng);
}

template <class T>
typename DetectorHead<T>::Output DetectorHead<T>::forward(const Var<T>& features,
                                                          std::span<const Box> proposals,
                                                          double stride) const {
  if (features.shape().size() != 3 || features.dim(0) != feature_channels_)
    throw ShapeError("detector: features " + shape_str(features.shape()) + " do not have " +
                     std::to_string(feature_channels_) + " channels");
  Output out;
  if (proposals.empty()) {
    out.logits = Var<T>::constant(Tensor<T>({0, num_classes_ + 1}));
    out.deltas = Var<T>::constant(Tensor<T>({0, 4 * num_classes_}));
    out.probs = Tensor<T>({0, num_classes_ + 1});
    return out;
  }
  const std::size_t n = proposals.size();
  Var<T> pooled = roi_pool(features, proposals, 1.0 / stride, pool_size_);
  Var<T> flat = reshape(pooled, {n, feature_channels_ * pool_size_ * pool_size_});
  Var<T> h = relu(fc2_(relu(fc1_(flat))));
  out.logits = cls_(h);
  out.deltas = reg_(h);
  out.probs = softmax_rows(out.logits.value());
  return out;
}

template <class T>
ParamList<T> DetectorHead<T>::params() {
  ParamList<T> out;
  fc1_.collect(out);
  fc2_.collect(out);
  cls_.collect(out);
  reg_.collect(out);
  return out;
}

template <class T>
void DetectorHead<T>::set_trainable(bool on) {
  for (Param<T>* p : params()) p->set_trainable(on);
}

void RoiSampleConfig::validate() const {
  if (rois_per_image == 0) throw std::invalid_argument("roi sampling: rois_per_image must be > 0");
  if (!(fg_fraction > 0.0 && fg_fraction < 1.0))
    throw std::invalid_argument("roi sampling: fg_fraction must be in (0, 1)");
  if (!(bg_iou_lo <= bg_iou_hi && bg_iou_hi <= fg_iou))
    throw std::invalid_argument("roi sampling: background range must lie below fg_iou");
}

std::size_t RoiSampleConfig::max_foreground() const {
  return static_cast<std::size_t>(std::floor(fg_fraction * static_cast<double>(rois_per_image)));
}

std::size_t RoiBatch::count_foreground() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
}

IndexedRoiBatch sample_candidates(std::span<const Box> candidates,
                                  std::span<const char> eligible,
                                  std::span<const Box> gt_boxes,
                                  std::span<const int> gt_classes,
                                  const RoiSampleConfig& cfg, Rng& rng) {
  cfg.validate();
  if (gt_boxes.size() != gt_classes.size())
    throw std::invalid_argument("roi sampling: gt boxes and classes differ in length");
  std::vector<std::size_t> fg, bg;
  std::vector<int> match(candidates.size(), -1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!eligible.empty() && !eligible[i]) continue;
    const Box& c = candidates[i];
    if (!(c.width() > 0.0) || !(c.height() > 0.0)) continue;
    double best = 0.0;
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(c, gt_boxes[g]);
      if (match[i] < 0 || v > best) {
        best = v;
        match[i] = static_cast<int>(g);
      }
    }
    if (!gt_boxes.empty() && best >= cfg.fg_iou)
      fg.push_back(i);
    else if (best >= cfg.bg_iou_lo && best < cfg.bg_iou_hi)
      bg.push_back(i);
  }
  const auto fg_pick = sample_without_replacement(std::move(fg), cfg.max_foreground(), rng);
  const auto bg_pick =
      sample_without_replacement(std::move(bg), cfg.rois_per_image - fg_pick.size(), rng);

  IndexedRoiBatch out;
  for (std::size_t i : fg_pick) {
    const auto g = static_cast<std::size_t>(match[i]);
    out.index.push_back(i);
    out.labels.push_back(gt_classes[g]);
    out.targets.push_back(encode(gt_boxes[g], candidates[i]));
  }
  for (std::size_t i : bg_pick) {
    out.index.push_back(i);
    out.labels.push_back(0);
    out.targets.push_back({});
  }
  return out;
}

RoiBatch sample_rois(std::span<const Box> proposals, std::span<const Box> gt_boxes,
                     std::span<const int> gt_classes, const RoiSampleConfig& cfg,
                     Rng& rng) {
  std::vector<Box> candidates(proposals.begin(), proposals.end());
  candidates.insert(candidates.end(), gt_boxes.begin(), gt_boxes.end());
  IndexedRoiBatch picked = sample_candidates(candidates, {}, gt_boxes, gt_classes, cfg, rng);
  RoiBatch out;
  for (std::size_t i : picked.index) out.rois.push_back(candidates[i]);
  out.labels = std::move(picked.labels);
  out.targets = std::move(picked.targets);
  return out;
}

template <class T>
DetectorLoss<T> detector_loss(const Var<T>& logits, const Var<T>& deltas,
                              std::span<const int> labels,
                              std::span<const BoxDelta> targets) {
  if (logits.shape().size() != 2 || deltas.shape().size() != 2)
    throw ShapeError("detector_loss: logits and deltas must be matrices");
  const std::size_t n = logits.dim(0);
  const std::size_t classes = logits.dim(1) - 1;
  if (deltas.dim(0) != n || deltas.dim(1) != 4 * classes || labels.size() != n ||
      targets.size() != n)
    throw ShapeError("detector_loss: logits " + shape_str(logits.shape()) + ", deltas " +
                     shape_str(deltas.shape()) + ", " + std::to_string(labels.size()) +
                     " labels are inconsistent");
  if (n == 0) throw std::invalid_argument("detector_loss: empty batch");

  Tensor<T> target({n, 4 * classes}, T{0});
  Tensor<T> weight({n, 4 * classes}, T{0});
  std::size_t n_fg = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] <= 0) continue;
    if (static_cast<std::size_t>(labels[r]) > classes)
      throw ShapeError("detector_loss: label " + std::to_string(labels[r]) + " out of range");
    ++n_fg;
    const std::size_t col = 4 * static_cast<std::size_t>(labels[r] - 1);
    const double vals[4] = {targets[r].tx, targets[r].ty, targets[r].tw, targets[r].th};
    for (std::size_t c = 0; c < 4; ++c) {
      target[r * 4 * classes + col + c] = static_cast<T>(vals[c]);
      weight[r * 4 * classes + col + c] = T{1};
    }
  }
  DetectorLoss<T> out;
  out.cls = softmax_logloss(logits, labels, static_cast<double>(n));
  out.reg = smooth_l1_loss(deltas, target, weight, static_cast<double>(std::max<std::size_t>(n_fg, 1)));
  out.total = add(out.cls, out.reg);
  return out;
}

template <class T>
std::vector<ScoredBox> detect(const Tensor<T>& probs, const Tensor<T>& deltas,
                              std::span<const Box> proposals, double image_w,
                              double image_h, const DetectParams& p,
                              std::size_t* candidates) {
  const std::size_t n = proposals.size();
  if (probs.rank() != 2 || probs.dim(0) != n || deltas.rank() != 2 || deltas.dim(0) != n)
    throw ShapeError("detect: outputs " + shape_str(probs.shape()) + ", " +
                     shape_str(deltas.shape()) + " do not match " + std::to_string(n) +
                     " proposals");
  const std::size_t classes = probs.dim(1) - 1;
  if (deltas.dim(1) != 4 * classes) throw ShapeError("detect: deltas must be N x 4C");
  if (candidates) *candidates = n * classes;

  std::vector<ScoredBox> all;
  for (std::size_t c = 1; c <= classes; ++c) {
    std::vector<ScoredBox> per_class;
    for (std::size_t r = 0; r < n; ++r) {
      const double score = probs[r * (classes + 1) + c];
      if (score < p.score_thresh) continue;
      const T* d = deltas.ptr() + r * 4 * classes + 4 * (c - 1);
      const Box b = clip(decode({d[0], d[1], d[2], d[3]}, proposals[r]), image_w, image_h);
      per_class.push_back({b, score, static_cast<int>(c)});
    }
    for (std::size_t i : nms(per_class, p.nms_iou)) all.push_back(per_class[i]);
  }
  std::vector<ScoredBox> out;
  for (std::size_t i : order_by_score(all)) {
    if (p.max_per_image != 0 && out.size() >= p.max_per_image) break;
    out.push_back(all[i]);
  }
  return out;
}

template class DetectorHead<float>;
template class DetectorHead<double>;
template DetectorLoss<float> detector_loss(const Var<float>&, const Var<float>&,
                                           std::span<const int>, std::span<const BoxDelta>);
template DetectorLoss<double> detector_loss(const Var<double>&, const Var<double>&,
                                            std::span<const int>, std::span<const BoxDelta>);
template std::vector<ScoredBox> detect(const Tensor<float>&, const Tensor<float>&,
                                       std::span<const Box>, double, double,
                                       const DetectParams&, std::size_t*);
template std::vector<ScoredBox> detect(const Tensor<double>&, const Tensor<double>&,
                                       std::span<const Box>, double, double,
                                       const DetectParams&, std::size_t*);

}  // namespace frcnn
