#include "frcnn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace frcnn {

void SgdConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("sgd: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0))
    throw std::invalid_argument("sgd: weight_decay must be >= 0");
}

template <class T>
void sgd_step(std::span<Param<T>* const> params, const SgdConfig& cfg) {
  cfg.validate();
  for (const Param<T>* p : params) {
    if (!p->trainable() || !p->var().has_grad()) continue;
    for (T g : p->var().grad().data())
      if (!std::isfinite(g))
        throw std::runtime_error("sgd_step: non-finite gradient in parameter '" +
                                 p->name() + "'");
  }
  const T lr = static_cast<T>(cfg.lr);
  const T mom = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (Param<T>* p : params) {
    if (!p->trainable()) continue;
    Tensor<T>& value = p->mutable_value();
    Tensor<T>& vel = p->velocity();
    const bool has_grad = p->var().has_grad();
    const T* grad = has_grad ? p->var().grad().ptr() : nullptr;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const T g = has_grad ? grad[i] : T{0};
      vel[i] = mom * vel[i] + g + wd * value[i];
      value[i] -= lr * vel[i];
    }
    p->var().zero_grad();
  }
}

template <class T>
Tensor<T> gaussian_init(const Shape& shape, double stddev, Rng& rng) {
  Tensor<T> out(shape);
  for (T& v : out.storage()) v = static_cast<T>(stddev * rng.normal());
  return out;
}

template void sgd_step<float>(std::span<Param<float>* const>, const SgdConfig&);
template void sgd_step<double>(std::span<Param<double>* const>, const SgdConfig&);
template Tensor<float> gaussian_init<float>(const Shape&, double, Rng&);
template Tensor<double> gaussian_init<double>(const Shape&, double, Rng&);

}  // namespace frcnn
