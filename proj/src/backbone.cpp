#include "frcnn/backbone.hpp"

#include <stdexcept>

namespace frcnn {

template <class T>
Backbone<T>::Backbone(const BackboneConfig& cfg, Rng& rng) {
  if (cfg.channels.empty()) throw std::invalid_argument("backbone needs at least one stage");
  std::size_t in = cfg.in_channels;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    const std::size_t out = cfg.channels[s];
    convs_.push_back(Conv2d<T>::make("backbone.conv" + std::to_string(s + 1), in, out,
                                     3, 1, 1, he_stddev(in * 9), rng));
    in = out;
  }
}

template <class T>
Var<T> Backbone<T>::forward(const Var<T>& image) const {
  Var<T> x = image;
  for (std::size_t s = 0; s < convs_.size(); ++s) {
    x = relu(convs_[s](x));
    if (s + 1 < convs_.size()) x = maxpool2x2(x);
  }
  return x;
}

template <class T>
std::size_t Backbone<T>::feature_extent(std::size_t pixels) const {
  for (std::size_t s = 0; s + 1 < convs_.size(); ++s) pixels /= 2;
  return pixels;
}

template <class T>
ParamList<T> Backbone<T>::params() {
  ParamList<T> out;
  for (auto& c : convs_) c.collect(out);
  return out;
}

template <class T>
void Backbone<T>::set_trainable(bool on) {
  for (Param<T>* p : params()) p->set_trainable(on);
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace frcnn
