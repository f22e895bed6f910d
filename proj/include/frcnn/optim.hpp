#pragma once

#include <span>
#include <string>
#include <vector>

#include "frcnn/autograd.hpp"
#include "frcnn/random.hpp"

namespace frcnn {

/// Trainable tensor with its momentum buffer. Copying a Param copies the
/// value into a fresh graph leaf; copies never alias.
template <class T>
class Param {
 public:
  Param() = default;
  Param(std::string name, Tensor<T> value)
      : name_(std::move(name)),
        velocity_(value.shape(), T{0}),
        var_(Var<T>::leaf(std::move(value), true)) {}

  Param(const Param& o)
      : name_(o.name_),
        velocity_(o.velocity_),
        var_(Var<T>::leaf(o.var_.value(), o.var_.requires_grad())) {}
  Param& operator=(const Param& o) {
    if (this != &o) *this = Param(o);
    return *this;
  }
  Param(Param&&) noexcept = default;
  Param& operator=(Param&&) noexcept = default;

  const std::string& name() const { return name_; }
  const Var<T>& var() const { return var_; }
  Var<T>& var() { return var_; }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& mutable_value() { return var_.mutable_value(); }
  Tensor<T>& velocity() { return velocity_; }
  const Tensor<T>& velocity() const { return velocity_; }

  /// Frozen params build no graph and are skipped by sgd_step.
  bool trainable() const { return var_.requires_grad(); }
  void set_trainable(bool on) {
    var_.set_requires_grad(on);
    if (!on) var_.zero_grad();
  }

 private:
  std::string name_;
  Tensor<T> velocity_;
  Var<T> var_;
};

struct SgdConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;

  void validate() const;
};

/// v <- momentum * v + grad + weight_decay * value; value <- value - lr * v;
/// then grad is zeroed. Frozen params are untouched. A NaN/inf anywhere in
/// the gradients raises std::runtime_error naming the parameter, before any
/// update is applied.
template <class T>
void sgd_step(std::span<Param<T>* const> params, const SgdConfig& cfg);

/// I.i.d. N(0, stddev^2) entries from `rng` (Box-Muller).
template <class T>
Tensor<T> gaussian_init(const Shape& shape, double stddev, Rng& rng);

}  // namespace frcnn
