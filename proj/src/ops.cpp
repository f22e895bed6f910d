#include "frcnn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace frcnn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

[[noreturn]] void shape_fail(const std::string& op, const std::string& what) {
  throw ShapeError(op + ": " + what);
}

void expect_rank(const std::string& op, const char* name, const Shape& s,
                 std::size_t rank) {
  if (s.size() != rank)
    shape_fail(op, std::string(name) + " must have rank " + std::to_string(rank) +
                       ", got " + shape_str(s));
}

struct ConvGeom {
  std::size_t c, h, w, kh, kw, stride, pad, oh, ow;
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::size_t hw = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * hw;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, T{0});
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? T{0}
                          : src[ix];
          }
        }
      }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
  const std::size_t hw = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * hw;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              std::size_t stride, std::size_t pad) {
  const std::string op = "conv2d";
  expect_rank(op, "input", x.shape(), 3);
  expect_rank(op, "weight", weight.shape(), 4);
  expect_rank(op, "bias", bias.shape(), 1);
  if (stride == 0) shape_fail(op, "stride must be >= 1");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), weight.dim(2), weight.dim(3),
             stride, pad, 0, 0};
  const std::size_t out_ch = weight.dim(0);
  if (weight.dim(1) != g.c)
    shape_fail(op, "input has " + std::to_string(g.c) + " channels, weight " +
                       shape_str(weight.shape()) + " expects " +
                       std::to_string(weight.dim(1)));
  if (bias.dim(0) != out_ch)
    shape_fail(op, "bias " + shape_str(bias.shape()) + " does not match " +
                       std::to_string(out_ch) + " output channels");
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw)
    shape_fail(op, "kernel " + shape_str(weight.shape()) +
                       " larger than padded input " + shape_str(x.shape()));
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  const std::size_t hw = g.oh * g.ow;
  const std::size_t ckk = g.c * g.kh * g.kw;

  // 1x1 stride-1 unpadded convolutions read the input directly.
  const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;
  Tensor<T> cols;
  if (!direct) {
    cols = Tensor<T>({ckk, hw});
    im2col(x.value().ptr(), g, cols.ptr());
  }
  const T* col_ptr = direct ? x.value().ptr() : cols.ptr();

  Tensor<T> out({out_ch, g.oh, g.ow});
  {
    CMapMat<T> W(weight.value().ptr(), static_cast<Eigen::Index>(out_ch),
                 static_cast<Eigen::Index>(ckk));
    CMapMat<T> X(col_ptr, static_cast<Eigen::Index>(ckk),
                 static_cast<Eigen::Index>(hw));
    MapMat<T> Y(out.ptr(), static_cast<Eigen::Index>(out_ch),
                static_cast<Eigen::Index>(hw));
    Y.noalias() = W * X;
    const T* b = bias.value().ptr();
    for (std::size_t o = 0; o < out_ch; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += b[o];
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_op<T>(
      op, std::move(out), {x, weight, bias},
      [xn, wn, bn, g, out_ch, hw, ckk, direct,
       cols = std::move(cols)](const Tensor<T>& gout) {
        CMapMat<T> G(gout.ptr(), static_cast<Eigen::Index>(out_ch),
                     static_cast<Eigen::Index>(hw));
        const T* col_ptr = direct ? xn->value.ptr() : cols.ptr();
        CMapMat<T> X(col_ptr, static_cast<Eigen::Index>(ckk),
                     static_cast<Eigen::Index>(hw));
        if (wn->requires_grad) {
          MapMat<T> dW(wn->ensure_grad().ptr(), static_cast<Eigen::Index>(out_ch),
                       static_cast<Eigen::Index>(ckk));
          dW.noalias() += G * X.transpose();
        }
        if (bn->requires_grad) {
          // Plain loop: Eigen's vectorized sum peels by pointer alignment,
          // which would make the result depend on where the heap put gout.
          T* db = bn->ensure_grad().ptr();
          const T* gp = gout.ptr();
          for (std::size_t o = 0; o < out_ch; ++o) {
            T acc{0};
            for (std::size_t i = 0; i < hw; ++i) acc += gp[o * hw + i];
            db[o] += acc;
          }
        }
        if (xn->requires_grad) {
          CMapMat<T> W(wn->value.ptr(), static_cast<Eigen::Index>(out_ch),
                       static_cast<Eigen::Index>(ckk));
          if (direct) {
            MapMat<T> dX(xn->ensure_grad().ptr(), static_cast<Eigen::Index>(ckk),
                         static_cast<Eigen::Index>(hw));
            dX.noalias() += W.transpose() * G;
          } else {
            RowMat<T> dcols = W.transpose() * G;
            col2im_add(dcols.data(), g, xn->ensure_grad().ptr());
          }
        }
      });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (T& v : out.storage()) v = v > T{0} ? v : T{0};
  auto xn = x.node();
  return make_op<T>("relu", std::move(out), {x}, [xn](const Tensor<T>& gout) {
    T* dx = xn->ensure_grad().ptr();
    const T* in = xn->value.ptr();
    for (std::size_t i = 0; i < gout.size(); ++i)
      if (in[i] > T{0}) dx[i] += gout[i];
  });
}

template <class T>
Var<T> maxpool2x2(const Var<T>& x) {
  expect_rank("maxpool2x2", "input", x.shape(), 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0)
    shape_fail("maxpool2x2", "input " + shape_str(x.shape()) + " smaller than 2x2");
  Tensor<T> out({c, oh, ow});
  std::vector<std::uint32_t> arg(out.size());
  const T* in = x.value().ptr();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (ch * h + 2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (ch * h + 2 * i + di) * w + 2 * j + dj;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (ch * oh + i) * ow + j;
        out[o] = in[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
  auto xn = x.node();
  return make_op<T>("maxpool2x2", std::move(out), {x},
                    [xn, arg = std::move(arg)](const Tensor<T>& gout) {
                      T* dx = xn->ensure_grad().ptr();
                      for (std::size_t o = 0; o < gout.size(); ++o)
                        dx[arg[o]] += gout[o];
                    });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const std::string op = "linear";
  expect_rank(op, "input", x.shape(), 2);
  expect_rank(op, "weight", weight.shape(), 2);
  expect_rank(op, "bias", bias.shape(), 1);
  const std::size_t n = x.dim(0), in = x.dim(1), outw = weight.dim(0);
  if (weight.dim(1) != in)
    shape_fail(op, "input " + shape_str(x.shape()) + " vs weight " +
                       shape_str(weight.shape()));
  if (bias.dim(0) != outw)
    shape_fail(op, "bias " + shape_str(bias.shape()) + " vs weight " +
                       shape_str(weight.shape()));
  const auto N = static_cast<Eigen::Index>(n);
  const auto I = static_cast<Eigen::Index>(in);
  const auto O = static_cast<Eigen::Index>(outw);
  Tensor<T> out({n, outw});
  {
    CMapMat<T> X(x.value().ptr(), N, I);
    CMapMat<T> W(weight.value().ptr(), O, I);
    MapMat<T> Y(out.ptr(), N, O);
    Y.noalias() = X * W.transpose();
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value().ptr(), O);
    Y.rowwise() += b;
  }
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_op<T>(op, std::move(out), {x, weight, bias},
                    [xn, wn, bn, N, I, O](const Tensor<T>& gout) {
                      CMapMat<T> G(gout.ptr(), N, O);
                      if (xn->requires_grad) {
                        MapMat<T> dX(xn->ensure_grad().ptr(), N, I);
                        CMapMat<T> W(wn->value.ptr(), O, I);
                        dX.noalias() += G * W;
                      }
                      if (wn->requires_grad) {
                        MapMat<T> dW(wn->ensure_grad().ptr(), O, I);
                        CMapMat<T> X(xn->value.ptr(), N, I);
                        dW.noalias() += G.transpose() * X;
                      }
                      if (bn->requires_grad) {
                        T* db = bn->ensure_grad().ptr();
                        const T* gp = gout.ptr();
                        for (Eigen::Index r = 0; r < N; ++r)
                          for (Eigen::Index o = 0; o < O; ++o) db[o] += gp[r * O + o];
                      }
                    });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  auto xn = x.node();
  return make_op<T>("reshape", std::move(out), {x}, [xn](const Tensor<T>& gout) {
    T* dx = xn->ensure_grad().ptr();
    for (std::size_t i = 0; i < gout.size(); ++i) dx[i] += gout[i];
  });
}

template <class T>
Var<T> to_rows(const Var<T>& x, std::size_t group) {
  expect_rank("to_rows", "input", x.shape(), 3);
  const std::size_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (group == 0 || ch % group != 0)
    shape_fail("to_rows", std::to_string(ch) + " channels not divisible into groups of " +
                              std::to_string(group));
  const std::size_t a_count = ch / group;
  const std::size_t hw = h * w;
  Tensor<T> out({hw * a_count, group});
  const T* in = x.value().ptr();
  for (std::size_t a = 0; a < a_count; ++a)
    for (std::size_t g = 0; g < group; ++g) {
      const T* src = in + (a * group + g) * hw;
      for (std::size_t cell = 0; cell < hw; ++cell)
        out[(cell * a_count + a) * group + g] = src[cell];
    }
  auto xn = x.node();
  return make_op<T>("to_rows", std::move(out), {x},
                    [xn, a_count, group, hw](const Tensor<T>& gout) {
                      T* dx = xn->ensure_grad().ptr();
                      for (std::size_t a = 0; a < a_count; ++a)
                        for (std::size_t g = 0; g < group; ++g) {
                          T* dst = dx + (a * group + g) * hw;
                          for (std::size_t cell = 0; cell < hw; ++cell)
                            dst[cell] += gout[(cell * a_count + a) * group + g];
                        }
                    });
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2)
    throw ShapeError("softmax_rows: logits must have rank 2, got " +
                     shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = logits.ptr() + r * k;
    T* dst = out.ptr() + r * k;
    const T mx = *std::max_element(row, row + k);
    T total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      dst[c] = std::exp(row[c] - mx);
      total += dst[c];
    }
    for (std::size_t c = 0; c < k; ++c) dst[c] /= total;
  }
  return out;
}

template <class T>
Var<T> softmax_logloss(const Var<T>& logits, std::span<const int> labels,
                       double normalizer) {
  const std::string op = "softmax_logloss";
  expect_rank(op, "logits", logits.shape(), 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    shape_fail(op, std::to_string(labels.size()) + " labels for logits " +
                       shape_str(logits.shape()));
  if (!(normalizer > 0.0)) shape_fail(op, "normalizer must be > 0");
  Tensor<T> prob = softmax_rows(logits.value());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= k)
      shape_fail(op, "label " + std::to_string(labels[r]) + " out of range for " +
                         std::to_string(k) + " classes");
    // log-softmax straight from the logits keeps perfect predictions at 0.
    const T* row = logits.value().ptr() + r * k;
    const T mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(double(row[c]) - double(mx));
    loss += std::log(total) - (double(row[labels[r]]) - double(mx));
  }
  Tensor<T> out({1}, static_cast<T>(loss / normalizer));
  auto ln = logits.node();
  std::vector<int> lab(labels.begin(), labels.end());
  return make_op<T>(op, std::move(out), {logits},
                    [ln, lab = std::move(lab), prob = std::move(prob), k,
                     normalizer](const Tensor<T>& gout) {
                      T* dx = ln->ensure_grad().ptr();
                      const T s = static_cast<T>(gout[0] / normalizer);
                      for (std::size_t r = 0; r < lab.size(); ++r) {
                        if (lab[r] < 0) continue;
                        for (std::size_t c = 0; c < k; ++c) {
                          const T onehot = static_cast<int>(c) == lab[r] ? T{1} : T{0};
                          dx[r * k + c] += s * (prob[r * k + c] - onehot);
                        }
                      }
                    });
}

template <class T>
Var<T> smooth_l1_loss(const Var<T>& pred, const Tensor<T>& target,
                      const Tensor<T>& weight, double normalizer) {
  const std::string op = "smooth_l1_loss";
  if (target.shape() != pred.shape() || weight.shape() != pred.shape())
    shape_fail(op, "pred " + shape_str(pred.shape()) + ", target " +
                       shape_str(target.shape()) + ", weight " +
                       shape_str(weight.shape()) + " must match");
  if (!(normalizer > 0.0)) shape_fail(op, "normalizer must be > 0");
  double loss = 0.0;
  const T* p = pred.value().ptr();
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (weight[i] != T{0})
      loss += double(weight[i]) * smooth_l1(double(p[i]) - double(target[i]));
  Tensor<T> out({1}, static_cast<T>(loss / normalizer));
  auto pn = pred.node();
  return make_op<T>(op, std::move(out), {pred},
                    [pn, target, weight, normalizer](const Tensor<T>& gout) {
                      T* dx = pn->ensure_grad().ptr();
                      const T s = static_cast<T>(gout[0] / normalizer);
                      const T* p = pn->value.ptr();
                      for (std::size_t i = 0; i < target.size(); ++i) {
                        if (weight[i] == T{0}) continue;
                        const T d = p[i] - target[i];
                        const T g = d <= T{-1} ? T{-1} : (d >= T{1} ? T{1} : d);
                        dx[i] += s * weight[i] * g;
                      }
                    });
}

RoiSpan roi_extent(double lo, double hi, double spatial_scale, std::size_t limit) {
  const auto lim = static_cast<double>(limit);
  double b = std::floor(lo * spatial_scale);
  double e = std::ceil(hi * spatial_scale);
  b = std::clamp(b, 0.0, lim);
  e = std::clamp(e, 0.0, lim);
  if (e <= b) {
    // Zero-area (or fully clipped) RoI: the single nearest cell.
    const double c = std::clamp(std::floor(0.5 * (lo + hi) * spatial_scale), 0.0, lim - 1.0);
    return {static_cast<std::size_t>(c), static_cast<std::size_t>(c) + 1};
  }
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

RoiSpan roi_bin(const RoiSpan& extent, std::size_t bin, std::size_t bins) {
  const std::size_t len = extent.end - extent.begin;
  const std::size_t lo = (bin * len) / bins;
  const std::size_t hi = ((bin + 1) * len + bins - 1) / bins;
  return {extent.begin + lo, extent.begin + std::max(hi, lo + 1)};
}

template <class T>
Var<T> roi_pool(const Var<T>& features, std::span<const Box> rois,
                double spatial_scale, std::size_t out_size) {
  const std::string op = "roi_pool";
  expect_rank(op, "features", features.shape(), 3);
  if (out_size == 0) shape_fail(op, "output size must be >= 1");
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  const std::size_t p = out_size;
  Tensor<T> out({rois.size(), c, p, p});
  std::vector<std::uint32_t> arg(out.size());
  const T* in = features.value().ptr();
  for (std::size_t r = 0; r < rois.size(); ++r) {
    const RoiSpan ys = roi_extent(rois[r].y1, rois[r].y2, spatial_scale, h);
    const RoiSpan xs = roi_extent(rois[r].x1, rois[r].x2, spatial_scale, w);
    for (std::size_t by = 0; by < p; ++by) {
      const RoiSpan yb = roi_bin(ys, by, p);
      for (std::size_t bx = 0; bx < p; ++bx) {
        const RoiSpan xb = roi_bin(xs, bx, p);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T* plane = in + ch * h * w;
          std::size_t best = yb.begin * w + xb.begin;
          for (std::size_t y = yb.begin; y < yb.end; ++y)
            for (std::size_t x = xb.begin; x < xb.end; ++x)
              if (plane[y * w + x] > plane[best]) best = y * w + x;
          const std::size_t o = ((r * c + ch) * p + by) * p + bx;
          out[o] = plane[best];
          arg[o] = static_cast<std::uint32_t>(ch * h * w + best);
        }
      }
    }
  }
  auto fn = features.node();
  return make_op<T>(op, std::move(out), {features},
                    [fn, arg = std::move(arg)](const Tensor<T>& gout) {
                      T* dx = fn->ensure_grad().ptr();
                      for (std::size_t o = 0; o < gout.size(); ++o) dx[arg[o]] += gout[o];
                    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    shape_fail("add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op<T>("add", std::move(out), {a, b}, [an, bn](const Tensor<T>& gout) {
    for (auto* n : {an.get(), bn.get()}) {
      if (!n->requires_grad) continue;
      T* d = n->ensure_grad().ptr();
      for (std::size_t i = 0; i < gout.size(); ++i) d[i] += gout[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (T& v : out.storage()) v *= factor;
  auto an = a.node();
  return make_op<T>("scale", std::move(out), {a}, [an, factor](const Tensor<T>& gout) {
    T* d = an->ensure_grad().ptr();
    for (std::size_t i = 0; i < gout.size(); ++i) d[i] += factor * gout[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  double total = 0.0;
  for (T v : a.value().data()) total += v;
  Tensor<T> out({1}, static_cast<T>(total));
  auto an = a.node();
  return make_op<T>("sum", std::move(out), {a}, [an](const Tensor<T>& gout) {
    T* d = an->ensure_grad().ptr();
    for (std::size_t i = 0; i < an->value.size(); ++i) d[i] += gout[0];
  });
}

#define FRCNN_INSTANTIATE_OPS(T)                                                   \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, \
                         std::size_t);                                             \
  template Var<T> relu(const Var<T>&);                                             \
  template Var<T> maxpool2x2(const Var<T>&);                                       \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> reshape(const Var<T>&, Shape);                                   \
  template Var<T> to_rows(const Var<T>&, std::size_t);                             \
  template Var<T> softmax_logloss(const Var<T>&, std::span<const int>, double);    \
  template Var<T> smooth_l1_loss(const Var<T>&, const Tensor<T>&, const Tensor<T>&,\
                                 double);                                          \
  template Var<T> roi_pool(const Var<T>&, std::span<const Box>, double,            \
                           std::size_t);                                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                               \
  template Var<T> scale(const Var<T>&, T);                                         \
  template Var<T> sum(const Var<T>&);                                              \
  template Tensor<T> softmax_rows(const Tensor<T>&);

FRCNN_INSTANTIATE_OPS(float)
FRCNN_INSTANTIATE_OPS(double)

}  // namespace frcnn
