#pragma once

#include <cstddef>
#include <vector>

#include "frcnn/layers.hpp"

namespace frcnn {

/// conv3x3/ReLU stages; every stage but the last is followed by 2x2 max
/// pooling, so the total stride is 2^(stages - 1).
struct BackboneConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{16, 32, 64, 64};

  std::size_t stride() const { return std::size_t{1} << (channels.size() - 1); }
  std::size_t out_channels() const { return channels.back(); }
};

/// Shared convolutional feature extractor.
template <class T>
class Backbone {
 public:
  Backbone() = default;
  /// He-normal weights: there is no pretrained model to start from.
  Backbone(const BackboneConfig& cfg, Rng& rng);

  Var<T> forward(const Var<T>& image) const;

  /// Feature grid size for an input of the given size.
  std::size_t feature_extent(std::size_t pixels) const;

  std::size_t stride() const { return std::size_t{1} << (convs_.size() - 1); }
  std::size_t out_channels() const { return convs_.back().out_channels(); }
  ParamList<T> params();
  void set_trainable(bool on);

 private:
  std::vector<Conv2d<T>> convs_;
};

}  // namespace frcnn
