#include "frcnn/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace frcnn {

namespace fs = std::filesystem;

bool shape_covers(const ShapeSpec& s, int px, int py) {
  if (px < s.x0 || py < s.y0 || px >= s.x0 + s.w || py >= s.y0 + s.h) return false;
  // Doubled coordinates keep pixel centers integral.
  const std::int64_t X = 2 * std::int64_t{px} + 1;
  const std::int64_t Y = 2 * std::int64_t{py} + 1;
  const std::int64_t w = s.w, h = s.h;
  switch (s.kind) {
    case ShapeKind::kRect:
      return true;
    case ShapeKind::kEllipse: {
      const std::int64_t dx = X - (2 * std::int64_t{s.x0} + w);
      const std::int64_t dy = Y - (2 * std::int64_t{s.y0} + h);
      return dx * dx * h * h + dy * dy * w * w <= w * w * h * h;
    }
    case ShapeKind::kTriangle: {
      const std::int64_t ax = 2 * std::int64_t{s.x0} + w, ay = 2 * std::int64_t{s.y0};
      const std::int64_t bx = 2 * std::int64_t{s.x0}, by = ay + 2 * h;
      const std::int64_t cx = bx + 2 * w, cy = by;
      auto edge = [](std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1,
                     std::int64_t x, std::int64_t y) {
        return (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
      };
      // Counter-clockwise in image coordinates (y down): all edges <= 0.
      return edge(ax, ay, bx, by, X, Y) <= 0 && edge(bx, by, cx, cy, X, Y) <= 0 &&
             edge(cx, cy, ax, ay, X, Y) <= 0;
    }
  }
  return false;
}

Box shape_mask_box(const ShapeSpec& s) {
  int minx = s.x0 + s.w, miny = s.y0 + s.h, maxx = s.x0 - 1, maxy = s.y0 - 1;
  for (int y = s.y0; y < s.y0 + s.h; ++y)
    for (int x = s.x0; x < s.x0 + s.w; ++x)
      if (shape_covers(s, x, y)) {
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
  if (maxx < minx) return {double(s.x0), double(s.y0), double(s.x0), double(s.y0)};
  return {double(minx), double(miny), double(maxx + 1), double(maxy + 1)};
}

namespace {

std::uint8_t to_byte(std::int64_t v) {
  return static_cast<std::uint8_t>(std::clamp<std::int64_t>(v, 0, 255));
}

bool overlaps_too_much(const Box& a, const Box& b) {
  return intersection_area(a, b) > 0.25 * std::min(a.area(), b.area());
}

}  // namespace

Scene generate_scene(const GenConfig& cfg, Rng& rng) {
  if (cfg.image_size < static_cast<std::size_t>(cfg.max_size) || cfg.min_size < 2 ||
      cfg.max_size < cfg.min_size || cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects)
    throw std::invalid_argument("generate_scene: inconsistent generator config");
  const int size = static_cast<int>(cfg.image_size);
  Scene scene;
  scene.image = Image(cfg.image_size, cfg.image_size);

  const std::int64_t base = rng.range(20, 80);
  for (auto& px : scene.image.rgb) px = 0;
  for (std::size_t y = 0; y < cfg.image_size; ++y)
    for (std::size_t x = 0; x < cfg.image_size; ++x) {
      const std::uint8_t v = to_byte(base + rng.range(-20, 20));
      for (std::size_t c = 0; c < 3; ++c) scene.image.at(x, y, c) = v;
    }

  const auto wanted = static_cast<std::size_t>(
      rng.range(static_cast<std::int64_t>(cfg.min_objects),
                static_cast<std::int64_t>(cfg.max_objects)));
  for (int attempt = 0; scene.objects.size() < wanted && attempt < 200; ++attempt) {
    ShapeSpec s;
    s.kind = static_cast<ShapeKind>(rng.range(1, 3));
    s.w = static_cast<int>(rng.range(cfg.min_size, cfg.max_size));
    const int h_lo = std::max(cfg.min_size, static_cast<int>(std::ceil(s.w * cfg.min_aspect)));
    const int h_hi = std::min(cfg.max_size, static_cast<int>(std::floor(s.w * cfg.max_aspect)));
    s.h = static_cast<int>(rng.range(h_lo, h_hi));
    s.x0 = static_cast<int>(rng.range(0, size - s.w));
    s.y0 = static_cast<int>(rng.range(0, size - s.h));
    s.intensity = static_cast<std::uint8_t>(rng.range(150, 240));
    const Box box = shape_mask_box(s);
    if (box.width() < 2.0 || box.height() < 2.0) continue;
    bool clash = false;
    for (const auto& o : scene.objects) clash = clash || overlaps_too_much(box, o.box);
    if (clash) continue;
    scene.objects.push_back({static_cast<int>(s.kind), box});
    scene.shapes.push_back(s);
  }

  for (const ShapeSpec& s : scene.shapes)
    for (int y = s.y0; y < s.y0 + s.h; ++y)
      for (int x = s.x0; x < s.x0 + s.w; ++x) {
        if (!shape_covers(s, x, y)) continue;
        const std::uint8_t v = to_byte(std::int64_t{s.intensity} + rng.range(-10, 10));
        for (std::size_t c = 0; c < 3; ++c)
          scene.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = v;
      }
  return scene;
}

void write_ppm(const fs::path& path, const Image& image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << "P6\n" << image.width << " " << image.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(image.rgb.data()),
          static_cast<std::streamsize>(image.rgb.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

Image read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P6") throw DataError(path.string() + ": not a binary PPM (P6)");
  Image img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw DataError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw DataError(path.string() + ": malformed PPM header");
  }
  img.rgb.resize(img.width * img.height * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (static_cast<std::size_t>(f.gcount()) != img.rgb.size())
    throw DataError(path.string() + ": truncated pixel data");
  return img;
}

std::string manifest_line(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["image"] = e.image;
  j["width"] = e.width;
  j["height"] = e.height;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : e.objects) {
    nlohmann::ordered_json oj;
    oj["class"] = o.class_id;
    oj["x1"] = o.box.x1;
    oj["y1"] = o.box.y1;
    oj["x2"] = o.box.x2;
    oj["y2"] = o.box.y2;
    j["objects"].push_back(std::move(oj));
  }
  return j.dump();
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  for (const auto& e : manifest.entries) f << manifest_line(e) << "\n";
  if (!f) throw DataError("write failed: " + path.string());
}

DatasetManifest gen_synthetic(std::size_t n_images, const fs::path& root, std::uint64_t seed,
                              const GenConfig& cfg) {
  if (n_images == 0) throw std::invalid_argument("gen_synthetic: n_images must be >= 1");
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw DataError("cannot create " + (root / "images").string() + ": " + ec.message());
  Rng rng = Rng::stream(seed, "data");
  DatasetManifest manifest;
  manifest.root = root;
  for (std::size_t i = 0; i < n_images; ++i) {
    const Scene scene = generate_scene(cfg, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.ppm", i);
    write_ppm(root / name, scene.image);
    manifest.entries.push_back({name, scene.image.width, scene.image.height, scene.objects});
  }
  write_manifest(root / "manifest.jsonl", manifest);
  return manifest;
}

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    ManifestEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      e.image = j.at("image").get<std::string>();
      e.width = j.at("width").get<std::size_t>();
      e.height = j.at("height").get<std::size_t>();
      for (const auto& o : j.at("objects")) {
        Object obj;
        obj.class_id = o.at("class").get<int>();
        obj.box = {o.at("x1").get<double>(), o.at("y1").get<double>(),
                   o.at("x2").get<double>(), o.at("y2").get<double>()};
        e.objects.push_back(obj);
      }
    } catch (const nlohmann::json::exception& err) {
      throw DataError(where + "malformed entry (" + err.what() + ")");
    }
    if (e.width == 0 || e.height == 0) throw DataError(where + "image size must be positive");
    for (const auto& o : e.objects) {
      const Box& b = o.box;
      if (o.class_id < 1) throw DataError(where + "object class must be >= 1");
      if (!(b.x2 > b.x1 && b.y2 > b.y1))
        throw DataError(where + "degenerate object box");
      if (b.x1 < 0 || b.y1 < 0 || b.x2 > double(e.width) || b.y2 > double(e.height))
        throw DataError(where + "object box outside the image bounds");
    }
    if (check_files && !fs::exists(manifest.root / e.image))
      throw DataError(where + "missing image file " + (manifest.root / e.image).string());
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

Rescaled rescale_shorter_side(const Image& image, std::span<const Box> boxes, std::size_t s) {
  if (s == 0) throw std::invalid_argument("rescale_shorter_side: s must be >= 1");
  if (image.width == 0 || image.height == 0)
    throw std::invalid_argument("rescale_shorter_side: empty image");
  Rescaled out;
  out.scale = static_cast<double>(s) / static_cast<double>(std::min(image.width, image.height));
  const auto ow = static_cast<std::size_t>(std::lround(double(image.width) * out.scale));
  const auto oh = static_cast<std::size_t>(std::lround(double(image.height) * out.scale));
  for (const Box& b : boxes) out.boxes.push_back(b.scaled(out.scale));
  if (ow == image.width && oh == image.height) {
    out.image = image;
    return out;
  }
  out.image = Image(ow, oh);
  const double inv = 1.0 / out.scale;
  for (std::size_t y = 0; y < oh; ++y) {
    const double sy = std::clamp((double(y) + 0.5) * inv - 0.5, 0.0, double(image.height - 1));
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - double(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double sx = std::clamp((double(x) + 0.5) * inv - 0.5, 0.0, double(image.width - 1));
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - double(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - fx) * image.at(x0, y0, c) + fx * image.at(x1, y0, c);
        const double bot = (1 - fx) * image.at(x0, y1, c) + fx * image.at(x1, y1, c);
        out.image.at(x, y, c) = to_byte(std::lround((1 - fy) * top + fy * bot));
      }
    }
  }
  return out;
}

Tensor<float> image_to_tensor(const Image& image) {
  Tensor<float> t({3, image.height, image.width});
  const std::size_t plane = image.height * image.width;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t[c * plane + y * image.width + x] = (float(image.at(x, y, c)) - 127.5f) / 127.5f;
  return t;
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t shorter_side) {
  std::vector<Sample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const Image img = read_ppm(manifest.root / e.image);
    if (img.width != e.width || img.height != e.height)
      throw DataError(e.image + ": manifest size disagrees with the PPM header");
    std::vector<Box> boxes;
    Sample s;
    s.id = e.image;
    for (const auto& o : e.objects) {
      boxes.push_back(o.box);
      s.classes.push_back(o.class_id);
    }
    Rescaled r = rescale_shorter_side(img, boxes, shorter_side);
    s.image = image_to_tensor(r.image);
    s.width = r.image.width;
    s.height = r.image.height;
    s.boxes = std::move(r.boxes);
    s.scale = r.scale;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace frcnn
