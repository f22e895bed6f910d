#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "frcnn/checkpoint.hpp"
#include "frcnn/ops.hpp"
#include "frcnn/optim.hpp"

namespace frcnn {

template <class T>
using ParamList = std::vector<Param<T>*>;

template <class T>
struct Conv2d {
  Param<T> weight;
  Param<T> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  /// Weights ~ N(0, stddev^2), zero bias.
  static Conv2d make(const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, std::size_t pad,
                     double stddev, Rng& rng) {
    Conv2d c;
    c.weight = Param<T>(name + ".weight",
                        gaussian_init<T>({out, in, kernel, kernel}, stddev, rng));
    c.bias = Param<T>(name + ".bias", Tensor<T>({out}, T{0}));
    c.stride = stride;
    c.pad = pad;
    return c;
  }

  std::size_t in_channels() const { return weight.value().dim(1); }
  std::size_t out_channels() const { return weight.value().dim(0); }

  Var<T> operator()(const Var<T>& x) const {
    return conv2d(x, weight.var(), bias.var(), stride, pad);
  }
  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <class T>
struct Linear {
  Param<T> weight;
  Param<T> bias;

  static Linear make(const std::string& name, std::size_t in, std::size_t out,
                     double stddev, Rng& rng) {
    Linear l;
    l.weight = Param<T>(name + ".weight", gaussian_init<T>({out, in}, stddev, rng));
    l.bias = Param<T>(name + ".bias", Tensor<T>({out}, T{0}));
    return l;
  }

  std::size_t out_features() const { return weight.value().dim(0); }

  Var<T> operator()(const Var<T>& x) const {
    return linear(x, weight.var(), bias.var());
  }
  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// He-normal stddev for a layer with the given fan-in.
inline double he_stddev(std::size_t fan_in) {
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

/// Standard deviation for newly added head layers.
inline constexpr double kHeadInitStddev = 0.01;

template <class T>
std::vector<NamedTensor> export_params(std::span<Param<T>* const> params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const Param<T>* p : params) out.push_back({p->name(), p->value().template cast<float>()});
  return out;
}

/// Copies values by name; every param must be present with a matching shape.
template <class T>
void import_params(std::span<Param<T>* const> params,
                   const std::vector<NamedTensor>& tensors) {
  for (Param<T>* p : params) {
    const NamedTensor* found = nullptr;
    for (const auto& t : tensors)
      if (t.name == p->name()) found = &t;
    if (!found) throw CheckpointError("checkpoint has no tensor '" + p->name() + "'");
    if (found->value.shape() != p->value().shape())
      throw CheckpointError("tensor '" + p->name() + "' has shape " +
                            shape_str(found->value.shape()) + ", model expects " +
                            shape_str(p->value().shape()));
    p->mutable_value() = found->value.template cast<T>();
  }
}

}  // namespace frcnn
