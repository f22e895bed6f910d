#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "frcnn/autograd.hpp"
#include "frcnn/boxes.hpp"

namespace frcnn {

/// Raised when operand shapes do not conform; the message names the op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Differentiable ops. Instantiated for float (training) and double
// (gradient checks). Single-image layout: feature maps are C x H x W.

/// x: C x H x W, weight: O x C x kh x kw, bias: O.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              std::size_t stride, std::size_t pad);

template <class T>
Var<T> relu(const Var<T>& x);

/// 2x2 window, stride 2, floor output size. Ties go to the first max in
/// row-major window order.
template <class T>
Var<T> maxpool2x2(const Var<T>& x);

/// x: N x in, weight: out x in, bias: out.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Regroups an anchor-major conv output (A*G) x H x W into rows:
/// row (i * W + j) * A + a holds channels [a*G, a*G + G) at cell (i, j).
template <class T>
Var<T> to_rows(const Var<T>& x, std::size_t group);

/// Sum over rows with label >= 0 of -log softmax(logits[r])[label], divided
/// by `normalizer`. Rows labeled < 0 contribute nothing. Returns a scalar.
template <class T>
Var<T> softmax_logloss(const Var<T>& logits, std::span<const int> labels,
                       double normalizer);

/// Sum of weight * R(pred - target) over all elements, divided by
/// `normalizer`, with R(x) = 0.5 x^2 for |x| < 1 and |x| - 0.5 otherwise.
template <class T>
Var<T> smooth_l1_loss(const Var<T>& pred, const Tensor<T>& target,
                      const Tensor<T>& weight, double normalizer);

/// Max pooling of each RoI (image coordinates) into P x P bins over
/// features C x H x W. Output N x C x P x P. Gradient flows to features
/// only, routed to each bin's argmax.
template <class T>
Var<T> roi_pool(const Var<T>& features, std::span<const Box> rois,
                double spatial_scale, std::size_t out_size);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> scale(const Var<T>& a, T factor);

template <class T>
Var<T> sum(const Var<T>& a);

// Scalar helpers and non-differentiable utilities.

inline double smooth_l1(double x) {
  const double ax = x < 0 ? -x : x;
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}
inline double smooth_l1_grad(double x) {
  if (x <= -1.0) return -1.0;
  if (x >= 1.0) return 1.0;
  return x;
}

/// Row-wise softmax of an N x K tensor.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

/// Feature-cell interval [begin, end) covering a RoI along one axis, and the
/// bin intervals inside it. Exposed for tests.
struct RoiSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};
RoiSpan roi_extent(double lo, double hi, double spatial_scale, std::size_t limit);
RoiSpan roi_bin(const RoiSpan& extent, std::size_t bin, std::size_t bins);

}  // namespace frcnn
