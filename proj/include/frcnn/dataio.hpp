#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "frcnn/boxes.hpp"
#include "frcnn/random.hpp"
#include "frcnn/tensor.hpp"

namespace frcnn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB raster.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return rgb[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

struct Object {
  int class_id = 0;
  Box box;
  bool operator==(const Object&) const = default;
};

enum class ShapeKind : int { kRect = 1, kEllipse = 2, kTriangle = 3 };

/// Filled shape inscribed in the integer pixel rectangle
/// [x0, x0 + w) x [y0, y0 + h). Triangles have their apex at top center.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::kRect;
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
  std::uint8_t intensity = 0;
};

/// Integer-exact coverage test at the center of pixel (px, py).
bool shape_covers(const ShapeSpec& s, int px, int py);

/// Tight box of the pixels a shape covers (half-open pixel coordinates).
Box shape_mask_box(const ShapeSpec& s);

struct Scene {
  Image image;
  std::vector<Object> objects;
  std::vector<ShapeSpec> shapes;  // parallel to objects
};

struct GenConfig {
  std::size_t image_size = 128;
  std::size_t min_objects = 1;
  std::size_t max_objects = 5;
  int min_size = 12;
  int max_size = 80;
  double min_aspect = 1.0 / 3.0;
  double max_aspect = 3.0;
};

/// One scene from `rng`: noisy background and 1..max_objects filled shapes,
/// class = shape kind.
Scene generate_scene(const GenConfig& cfg, Rng& rng);

struct ManifestEntry {
  std::string image;  // relative to the manifest directory
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Object> objects;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory holding manifest.jsonl
};

/// Writes <root>/images/NNNNNN.ppm and <root>/manifest.jsonl. Determined by
/// (n_images, cfg, seed) alone.
DatasetManifest gen_synthetic(std::size_t n_images, const std::filesystem::path& root,
                              std::uint64_t seed, const GenConfig& cfg = {});

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// One JSON object per line:
/// {"image","width","height","objects":[{"class","x1","y1","x2","y2"}]}.
std::string manifest_line(const ManifestEntry& entry);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Parses and validates; errors carry the line number or missing path.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

struct Rescaled {
  Image image;
  std::vector<Box> boxes;
  double scale = 1.0;
};

/// Uniform scale s / min(w, h): bilinear raster resampling, boxes multiplied.
Rescaled rescale_shorter_side(const Image& image, std::span<const Box> boxes,
                              std::size_t s);

/// 3 x H x W float tensor with bytes mapped to [-1, 1].
Tensor<float> image_to_tensor(const Image& image);

/// A training/eval image ready for the network.
struct Sample {
  std::string id;
  Tensor<float> image;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Box> boxes;
  std::vector<int> classes;
  double scale = 1.0;  // rescale factor applied to the stored image
};

/// Loads every entry, rescaling the shorter side to `shorter_side`.
std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t shorter_side);

}  // namespace frcnn
