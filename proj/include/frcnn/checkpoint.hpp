#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "frcnn/tensor.hpp"

namespace frcnn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor<float> value;

  bool operator==(const NamedTensor&) const = default;
};

/// Binary layout, all integers little-endian:
///   "FRPN" | u32 version (1) | u32 count |
///   count x { u16 name_len | name bytes (UTF-8) | u8 rank |
///             rank x u32 extent | prod(extents) x f32 }
std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the encoded bytes of the given tensors.
std::uint64_t checksum(const std::vector<NamedTensor>& tensors);

}  // namespace frcnn
