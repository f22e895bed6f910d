#include "frcnn/onestage.hpp"

#include <algorithm>
#include <stdexcept>

namespace frcnn {

template <class T>
SlidingHead<T> make_dense_head(std::size_t in_channels, std::size_t head_dim,
                               std::size_t k, std::size_t num_classes, Rng& rng) {
  return SlidingHead<T>("dense", in_channels, head_dim, k, num_classes + 1,
                        4 * num_classes, rng);
}

namespace {

std::size_t classes_from(const Shape& cls, const Shape& reg, std::size_t k) {
  if (cls.size() != 3 || reg.size() != 3 || k == 0 || cls[0] % k != 0 || reg[0] % k != 0)
    throw ShapeError("one-stage: cls " + shape_str(cls) + " / reg " + shape_str(reg) +
                     " are not per-window maps");
  const std::size_t c1 = cls[0] / k;
  if (c1 < 2 || reg[0] / k != 4 * (c1 - 1))
    throw ShapeError("one-stage: channel law (C+1)k / 4Ck violated by " + shape_str(cls) +
                     ", " + shape_str(reg));
  return c1 - 1;
}

}  // namespace

template <class T>
DetectorLoss<T> onestage_loss(const Var<T>& cls, const Var<T>& reg,
                              const AnchorSet& windows, std::span<const Box> gt_boxes,
                              std::span<const int> gt_classes,
                              const RoiSampleConfig& cfg, Rng& rng) {
  const std::size_t classes = classes_from(cls.shape(), reg.shape(), windows.k);
  const std::size_t n = windows.size();
  if (cls.dim(1) * cls.dim(2) * windows.k != n)
    throw ShapeError("one-stage: window set does not match the output grid");
  const IndexedRoiBatch batch =
      sample_candidates(windows.anchors, windows.inside, gt_boxes, gt_classes, cfg, rng);
  if (batch.index.empty()) throw std::runtime_error("one-stage: no windows sampled");

  std::vector<int> labels(n, -1);
  Tensor<T> target({n, 4 * classes}, T{0});
  Tensor<T> weight({n, 4 * classes}, T{0});
  std::size_t n_fg = 0;
  for (std::size_t s = 0; s < batch.index.size(); ++s) {
    const std::size_t r = batch.index[s];
    labels[r] = batch.labels[s];
    if (batch.labels[s] <= 0) continue;
    ++n_fg;
    const std::size_t col = 4 * static_cast<std::size_t>(batch.labels[s] - 1);
    const BoxDelta& d = batch.targets[s];
    const double vals[4] = {d.tx, d.ty, d.tw, d.th};
    for (std::size_t c = 0; c < 4; ++c) {
      target[r * 4 * classes + col + c] = static_cast<T>(vals[c]);
      weight[r * 4 * classes + col + c] = T{1};
    }
  }
  DetectorLoss<T> out;
  out.cls = softmax_logloss(to_rows(cls, classes + 1), labels,
                            static_cast<double>(batch.index.size()));
  out.reg = smooth_l1_loss(to_rows(reg, 4 * classes), target, weight,
                           static_cast<double>(std::max<std::size_t>(n_fg, 1)));
  out.total = add(out.cls, out.reg);
  return out;
}

template <class T>
std::vector<ScoredBox> one_stage_detect(const Tensor<T>& cls, const Tensor<T>& reg,
                                        const AnchorSet& windows, double image_w,
                                        double image_h, const DetectParams& p,
                                        std::size_t* candidates) {
  const std::size_t classes = classes_from(cls.shape(), reg.shape(), windows.k);
  NoGradGuard no_grad;
  const Tensor<T> rows = to_rows(Var<T>::constant(cls), classes + 1).value();
  const Tensor<T> deltas = to_rows(Var<T>::constant(reg), 4 * classes).value();
  if (rows.dim(0) != windows.size())
    throw ShapeError("one-stage: window set does not match the output grid");
  return detect(softmax_rows(rows), deltas, windows.anchors, image_w, image_h, p,
                candidates);
}

template SlidingHead<float> make_dense_head<float>(std::size_t, std::size_t, std::size_t,
                                                   std::size_t, Rng&);
template SlidingHead<double> make_dense_head<double>(std::size_t, std::size_t, std::size_t,
                                                     std::size_t, Rng&);
template DetectorLoss<float> onestage_loss(const Var<float>&, const Var<float>&,
                                           const AnchorSet&, std::span<const Box>,
                                           std::span<const int>, const RoiSampleConfig&,
                                           Rng&);
template DetectorLoss<double> onestage_loss(const Var<double>&, const Var<double>&,
                                            const AnchorSet&, std::span<const Box>,
                                            std::span<const int>, const RoiSampleConfig&,
                                            Rng&);
template std::vector<ScoredBox> one_stage_detect(const Tensor<float>&, const Tensor<float>&,
                                                 const AnchorSet&, double, double,
                                                 const DetectParams&, std::size_t*);
template std::vector<ScoredBox> one_stage_detect(const Tensor<double>&,
                                                 const Tensor<double>&, const AnchorSet&,
                                                 double, double, const DetectParams&,
                                                 std::size_t*);

}  // namespace frcnn
