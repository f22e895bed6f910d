#include "frcnn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "frcnn/random.hpp"

namespace frcnn {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U get_le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw CheckpointError("checkpoint: name too long: " + t.name.substr(0, 32));
    if (t.value.rank() > std::numeric_limits<std::uint8_t>::max())
      throw CheckpointError("checkpoint: rank too large for " + t.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.value.rank()));
    for (std::size_t e : t.value.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (float f : t.value.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_bytes(4) != std::string(kMagic, 4))
    throw CheckpointError("checkpoint: bad magic (expected FRPN)");
  const auto version = in.get_le<std::uint32_t>();
  if (version != kVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = in.get_le<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.get_bytes(in.get_le<std::uint16_t>());
    const auto rank = in.get_le<std::uint8_t>();
    Shape shape(rank);
    for (auto& e : shape) e = in.get_le<std::uint32_t>();
    std::vector<float> data(shape_numel(shape));
    for (float& f : data) f = std::bit_cast<float>(in.get_le<std::uint32_t>());
    t.value = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  if (!in.done()) throw CheckpointError("checkpoint: trailing bytes after last tensor");
  return out;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

std::uint64_t checksum(const std::vector<NamedTensor>& tensors) {
  return fnv1a64(encode_checkpoint(tensors));
}

}  // namespace frcnn
