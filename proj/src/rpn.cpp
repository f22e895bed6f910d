#include "frcnn/rpn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frcnn {

template <class T>
SlidingHead<T>::SlidingHead(const std::string& prefix, std::size_t in_channels,
                            std::size_t head_dim, std::size_t k,
                            std::size_t cls_per_anchor, std::size_t reg_per_anchor,
                            Rng& rng)
    : k_(k), cls_per_anchor_(cls_per_anchor), reg_per_anchor_(reg_per_anchor) {
  if (k == 0 || cls_per_anchor == 0 || reg_per_anchor == 0 || head_dim == 0)
    throw std::invalid_argument(prefix + ": head dimensions must be positive");
  trunk_ = Conv2d<T>::make(prefix + ".trunk", in_channels, head_dim, 3, 1, 1,
                           kHeadInitStddev, rng);
  cls_ = Conv2d<T>::make(prefix + ".cls", head_dim, k * cls_per_anchor, 1, 1, 0,
                         kHeadInitStddev, rng);
  reg_ = Conv2d<T>::make(prefix + ".reg", head_dim, k * reg_per_anchor, 1, 1, 0,
                         kHeadInitStddev, rng);
  if (cls_.out_channels() != k * cls_per_anchor || reg_.out_channels() != k * reg_per_anchor)
    throw std::logic_error(prefix + ": output channel law violated");
}

template <class T>
typename SlidingHead<T>::Output SlidingHead<T>::forward(const Var<T>& features) const {
  if (features.shape().size() != 3 || features.dim(0) != trunk_.in_channels())
    throw ShapeError("sliding head: features " + shape_str(features.shape()) +
                     " do not have " + std::to_string(trunk_.in_channels()) +
                     " channels");
  Var<T> hidden = relu(trunk_(features));
  return {cls_(hidden), reg_(hidden)};
}

template <class T>
ParamList<T> SlidingHead<T>::params() {
  ParamList<T> out;
  trunk_.collect(out);
  cls_.collect(out);
  reg_.collect(out);
  return out;
}

template <class T>
void SlidingHead<T>::set_trainable(bool on) {
  for (Param<T>* p : params()) p->set_trainable(on);
}

template <class T>
SlidingHead<T> make_rpn_head(std::size_t in_channels, std::size_t head_dim,
                             std::size_t k, Rng& rng) {
  return SlidingHead<T>("rpn", in_channels, head_dim, k, 2, 4, rng);
}

void LossWeights::validate() const {
  if (!(lambda > 0.0) || !(n_cls > 0.0) || n_reg < 0.0)
    throw std::invalid_argument("loss weights: lambda and n_cls must be > 0, n_reg >= 0");
}

template <class T>
RpnLoss<T> rpn_loss(const Var<T>& cls_scores, const Var<T>& reg_deltas,
                    const RpnTargets& targets, const LossWeights& w) {
  w.validate();
  if (cls_scores.shape().size() != 3 || reg_deltas.shape().size() != 3 ||
      cls_scores.dim(0) * 2 != reg_deltas.dim(0) || cls_scores.dim(0) % 2 != 0 ||
      cls_scores.dim(1) != reg_deltas.dim(1) || cls_scores.dim(2) != reg_deltas.dim(2))
    throw ShapeError("rpn_loss: cls " + shape_str(cls_scores.shape()) + " and reg " +
                     shape_str(reg_deltas.shape()) + " are not 2k/4k maps of one grid");
  const std::size_t k = cls_scores.dim(0) / 2;
  const std::size_t cells = cls_scores.dim(1) * cls_scores.dim(2);
  const std::size_t n = cells * k;
  if (targets.size() != n)
    throw ShapeError("rpn_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " anchors");
  if (targets.count_sampled() == 0)
    throw std::runtime_error("rpn_loss: no sampled anchors");

  std::vector<int> labels(n, -1);
  Tensor<T> target({n, 4}, T{0});
  Tensor<T> weight({n, 4}, T{0});
  for (std::size_t a = 0; a < n; ++a) {
    const AnchorLabel label = targets.labels[a];
    if (targets.sample_mask[a] && label != AnchorLabel::kIgnore)
      labels[a] = label == AnchorLabel::kPositive ? 1 : 0;
    if (label == AnchorLabel::kPositive) {
      const BoxDelta& d = targets.target_deltas[a];
      const double vals[4] = {d.tx, d.ty, d.tw, d.th};
      for (std::size_t c = 0; c < 4; ++c) {
        target[a * 4 + c] = static_cast<T>(vals[c]);
        weight[a * 4 + c] = T{1};
      }
    }
  }
  const double n_reg = w.n_reg > 0.0 ? w.n_reg : static_cast<double>(cells);

  RpnLoss<T> out;
  out.cls = softmax_logloss(to_rows(cls_scores, 2), labels, w.n_cls);
  out.reg = smooth_l1_loss(to_rows(reg_deltas, 4), target, weight, n_reg);
  out.total = add(out.cls, scale(out.reg, static_cast<T>(w.lambda)));
  return out;
}

void ProposalParams::validate() const {
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0))
    throw std::invalid_argument("proposals: nms_iou must be in [0, 1]");
  if (post_nms_top > pre_nms_top)
    throw std::invalid_argument("proposals: post_nms_top must not exceed pre_nms_top");
  if (min_size < 0.0) throw std::invalid_argument("proposals: min_size must be >= 0");
}

ProposalParams ProposalParams::train_default() {
  ProposalParams p;
  p.post_nms_top = 2000;
  return p;
}

ProposalParams ProposalParams::test_default() { return {}; }

template <class T>
std::vector<double> objectness(const Tensor<T>& cls_scores) {
  if (cls_scores.rank() != 3 || cls_scores.dim(0) % 2 != 0)
    throw ShapeError("objectness: expected 2k x H x W, got " + shape_str(cls_scores.shape()));
  const std::size_t k = cls_scores.dim(0) / 2;
  const std::size_t cells = cls_scores.dim(1) * cls_scores.dim(2);
  std::vector<double> out(cells * k);
  for (std::size_t a = 0; a < k; ++a) {
    const T* bg = cls_scores.ptr() + (2 * a) * cells;
    const T* fg = cls_scores.ptr() + (2 * a + 1) * cells;
    for (std::size_t cell = 0; cell < cells; ++cell)
      out[cell * k + a] = 1.0 / (1.0 + std::exp(double(bg[cell]) - double(fg[cell])));
  }
  return out;
}

template <class T>
std::vector<ScoredBox> generate_proposals(const Tensor<T>& cls_scores,
                                          const Tensor<T>& reg_deltas,
                                          const AnchorSet& anchors, double image_w,
                                          double image_h, const ProposalParams& p,
                                          Rng* rng) {
  p.validate();
  const std::size_t n = anchors.size();
  if (cls_scores.size() != 2 * n || reg_deltas.size() != 4 * n || reg_deltas.rank() != 3)
    throw ShapeError("generate_proposals: outputs " + shape_str(cls_scores.shape()) + ", " +
                     shape_str(reg_deltas.shape()) + " inconsistent with " +
                     std::to_string(n) + " anchors");
  const std::size_t k = anchors.k;
  const std::size_t cells = reg_deltas.dim(1) * reg_deltas.dim(2);

  const std::vector<double> scores = objectness(cls_scores);
  std::vector<ScoredBox> candidates;
  candidates.reserve(n);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t a = 0; a < k; ++a) {
      const std::size_t idx = cell * k + a;
      BoxDelta d;
      if (p.use_reg) {
        const T* base = reg_deltas.ptr() + (4 * a) * cells + cell;
        d = {base[0], base[cells], base[2 * cells], base[3 * cells]};
      }
      const Box b = clip(decode(d, anchors.anchors[idx]), image_w, image_h);
      if (b.width() < p.min_size || b.height() < p.min_size) continue;
      candidates.push_back({b, scores[idx], 0});
    }
  }

  if (!p.use_cls) {
    if (rng == nullptr)
      throw std::invalid_argument("generate_proposals: unscored mode needs an rng");
    std::vector<std::size_t> pool(candidates.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::vector<ScoredBox> out;
    for (std::size_t i : sample_without_replacement(std::move(pool), p.post_nms_top, *rng))
      out.push_back({candidates[i].box, 0.0, 0});
    return out;
  }

  std::vector<std::size_t> order = order_by_score(candidates);
  if (order.size() > p.pre_nms_top) order.resize(p.pre_nms_top);
  std::vector<ScoredBox> ranked;
  ranked.reserve(order.size());
  for (std::size_t i : order) ranked.push_back(candidates[i]);
  std::vector<ScoredBox> out;
  for (std::size_t i : nms(ranked, p.nms_iou, p.post_nms_top)) out.push_back(ranked[i]);
  return out;
}

template class SlidingHead<float>;
template class SlidingHead<double>;
template SlidingHead<float> make_rpn_head<float>(std::size_t, std::size_t, std::size_t, Rng&);
template SlidingHead<double> make_rpn_head<double>(std::size_t, std::size_t, std::size_t, Rng&);
template RpnLoss<float> rpn_loss(const Var<float>&, const Var<float>&, const RpnTargets&,
                                 const LossWeights&);
template RpnLoss<double> rpn_loss(const Var<double>&, const Var<double>&, const RpnTargets&,
                                  const LossWeights&);
template std::vector<double> objectness(const Tensor<float>&);
template std::vector<double> objectness(const Tensor<double>&);
template std::vector<ScoredBox> generate_proposals(const Tensor<float>&, const Tensor<float>&,
                                                   const AnchorSet&, double, double,
                                                   const ProposalParams&, Rng*);
template std::vector<ScoredBox> generate_proposals(const Tensor<double>&, const Tensor<double>&,
                                                   const AnchorSet&, double, double,
                                                   const ProposalParams&, Rng*);

}  // namespace frcnn
