#include "frcnn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace frcnn {

namespace {

const char* const kScheduleNames[] = {"rpn", "step1", "step2", "step3",
                                      "step4", "joint", "onestage"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class M>
Field size_field(M m) {
  return {[m](const RunConfig& c) { return std::to_string(m(const_cast<RunConfig&>(c))); },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            m(c) = parse_int<std::size_t>(k, v);
          }};
}

template <class M>
Field int_field(M m) {
  return {[m](const RunConfig& c) { return std::to_string(m(const_cast<RunConfig&>(c))); },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            m(c) = parse_int<int>(k, v);
          }};
}

template <class M>
Field double_field(M m) {
  return {[m](const RunConfig& c) { return fmt_double(m(const_cast<RunConfig&>(c))); },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            m(c) = parse_double(k, v);
          }};
}

template <class M>
Field bool_field(M m) {
  return {[m](const RunConfig& c) {
            return std::string(m(const_cast<RunConfig&>(c)) ? "true" : "false");
          },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            m(c) = parse_bool(k, v);
          }};
}

template <class M>
Field double_list_field(M m) {
  return {[m](const RunConfig& c) {
            std::string s;
            for (double v : m(const_cast<RunConfig&>(c))) s += (s.empty() ? "" : ",") + fmt_double(v);
            return s;
          },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            std::vector<double> out;
            for (const auto& item : split_list(v)) out.push_back(parse_double(k, item));
            if (out.empty()) throw ConfigError(k + ": empty list");
            m(c) = out;
          }};
}

template <class M>
Field size_list_field(M m) {
  return {[m](const RunConfig& c) {
            std::string s;
            for (auto v : m(const_cast<RunConfig&>(c)))
              s += (s.empty() ? "" : ",") + std::to_string(v);
            return s;
          },
          [m](RunConfig& c, const std::string& k, const std::string& v) {
            std::vector<std::size_t> out;
            for (const auto& item : split_list(v)) out.push_back(parse_int<std::size_t>(k, item));
            if (out.empty()) throw ConfigError(k + ": empty list");
            m(c) = out;
          }};
}

void add_proposals(std::map<std::string, Field>& f, const std::string& prefix,
                   ProposalParams ModelConfig::*which) {
  f[prefix + ".nms_iou"] = double_field([which](RunConfig& c) -> double& { return (c.model.*which).nms_iou; });
  f[prefix + ".pre_nms_top"] = size_field([which](RunConfig& c) -> std::size_t& { return (c.model.*which).pre_nms_top; });
  f[prefix + ".post_nms_top"] = size_field([which](RunConfig& c) -> std::size_t& { return (c.model.*which).post_nms_top; });
  f[prefix + ".min_size"] = double_field([which](RunConfig& c) -> double& { return (c.model.*which).min_size; });
  f[prefix + ".use_reg"] = bool_field([which](RunConfig& c) -> bool& { return (c.model.*which).use_reg; });
  f[prefix + ".use_cls"] = bool_field([which](RunConfig& c) -> bool& { return (c.model.*which).use_cls; });
}

void add_roi(std::map<std::string, Field>& f, const std::string& prefix,
             RoiSampleConfig ModelConfig::*which) {
  f[prefix + ".rois_per_image"] = size_field([which](RunConfig& c) -> std::size_t& { return (c.model.*which).rois_per_image; });
  f[prefix + ".fg_fraction"] = double_field([which](RunConfig& c) -> double& { return (c.model.*which).fg_fraction; });
  f[prefix + ".fg_iou"] = double_field([which](RunConfig& c) -> double& { return (c.model.*which).fg_iou; });
  f[prefix + ".bg_iou_lo"] = double_field([which](RunConfig& c) -> double& { return (c.model.*which).bg_iou_lo; });
  f[prefix + ".bg_iou_hi"] = double_field([which](RunConfig& c) -> double& { return (c.model.*which).bg_iou_hi; });
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    using C = RunConfig;
    f["seed"] = {[](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& k, const std::string& v) {
                   c.seed = parse_int<std::uint64_t>(k, v);
                 }};
    f["data.shorter_side"] = size_field([](C& c) -> std::size_t& { return c.shorter_side; });
    f["data.image_size"] = size_field([](C& c) -> std::size_t& { return c.data.image_size; });
    f["data.min_objects"] = size_field([](C& c) -> std::size_t& { return c.data.min_objects; });
    f["data.max_objects"] = size_field([](C& c) -> std::size_t& { return c.data.max_objects; });
    f["data.min_size"] = int_field([](C& c) -> int& { return c.data.min_size; });
    f["data.max_size"] = int_field([](C& c) -> int& { return c.data.max_size; });
    f["data.min_aspect"] = double_field([](C& c) -> double& { return c.data.min_aspect; });
    f["data.max_aspect"] = double_field([](C& c) -> double& { return c.data.max_aspect; });

    f["anchors.scales"] = double_list_field([](C& c) -> std::vector<double>& { return c.model.anchors.scales; });
    f["anchors.ratios"] = double_list_field([](C& c) -> std::vector<double>& { return c.model.anchors.ratios; });
    f["anchors.stride"] = double_field([](C& c) -> double& { return c.model.anchors.stride; });
    f["backbone.channels"] = size_list_field([](C& c) -> std::vector<std::size_t>& { return c.model.backbone.channels; });
    f["rpn.head_dim"] = size_field([](C& c) -> std::size_t& { return c.model.head_dim; });
    f["detector.num_classes"] = size_field([](C& c) -> std::size_t& { return c.model.detector.num_classes; });
    f["detector.pool_size"] = size_field([](C& c) -> std::size_t& { return c.model.detector.pool_size; });
    f["detector.hidden"] = size_field([](C& c) -> std::size_t& { return c.model.detector.hidden; });

    f["loss.lambda"] = double_field([](C& c) -> double& { return c.model.loss.lambda; });
    f["loss.n_cls"] = double_field([](C& c) -> double& { return c.model.loss.n_cls; });
    f["loss.n_reg"] = double_field([](C& c) -> double& { return c.model.loss.n_reg; });
    f["assign.pos_iou"] = double_field([](C& c) -> double& { return c.model.assign.pos_iou; });
    f["assign.neg_iou"] = double_field([](C& c) -> double& { return c.model.assign.neg_iou; });
    f["assign.batch"] = size_field([](C& c) -> std::size_t& { return c.model.assign.batch; });
    f["assign.max_pos"] = size_field([](C& c) -> std::size_t& { return c.model.assign.max_pos; });

    add_proposals(f, "proposals.train", &ModelConfig::train_proposals);
    add_proposals(f, "proposals.test", &ModelConfig::test_proposals);
    add_roi(f, "roi", &ModelConfig::roi);
    add_roi(f, "dense", &ModelConfig::dense_roi);
    f["detect.score_thresh"] = double_field([](C& c) -> double& { return c.model.detect.score_thresh; });
    f["detect.nms_iou"] = double_field([](C& c) -> double& { return c.model.detect.nms_iou; });
    f["detect.max_per_image"] = size_field([](C& c) -> std::size_t& { return c.model.detect.max_per_image; });

    f["sgd.momentum"] = double_field([](C& c) -> double& { return c.momentum; });
    f["sgd.weight_decay"] = double_field([](C& c) -> double& { return c.weight_decay; });
    for (const char* name : kScheduleNames) {
      const std::string n = name;
      f["schedule." + n + ".iters"] = size_field([n](C& c) -> std::size_t& { return c.schedules[n].iters; });
      f["schedule." + n + ".lr"] = double_field([n](C& c) -> double& { return c.schedules[n].lr; });
      f["schedule." + n + ".lr_drop_fraction"] = double_field([n](C& c) -> double& { return c.schedules[n].lr_drop_fraction; });
    }
    f["bench.warmup"] = size_field([](C& c) -> std::size_t& { return c.bench_warmup; });
    f["bench.timed"] = size_field([](C& c) -> std::size_t& { return c.bench_timed; });
    return f;
  }();
  return table;
}

}  // namespace

RunConfig::RunConfig() {
  // lr is raised from 0.001 for from-scratch training at toy scale.
  for (const char* name : kScheduleNames) schedules[name] = {5000, 0.01, 0.75};
  schedules["joint"].iters = 8000;
  // Same number of SGD iterations as the four alternating steps together.
  schedules["onestage"].iters = 20000;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& f = fields();
  const auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, trim(value));
}

void RunConfig::load(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value, got '" + line + "'");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  load(ss.str(), path.string());
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& kv : fields()) out.push_back(kv.first);
  return out;
}

TrainSchedule RunConfig::schedule(const std::string& name) const {
  const auto it = schedules.find(name);
  if (it == schedules.end()) throw ConfigError("no schedule named '" + name + "'");
  TrainSchedule s;
  s.total_iters = it->second.iters;
  s.lr = it->second.lr;
  const double frac = it->second.lr_drop_fraction;
  if (!(frac >= 0.0 && frac <= 1.0))
    throw ConfigError("schedule." + name + ".lr_drop_fraction must lie in [0, 1]");
  s.lr_drop_at = static_cast<std::size_t>(std::floor(static_cast<double>(s.total_iters) * frac));
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  s.seed = Rng::stream(seed, "schedule." + name).next_u64();
  return s;
}

void RunConfig::validate() const {
  try {
    model.validate();
    for (const auto& kv : schedules) schedule(kv.first).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (shorter_side == 0) throw ConfigError("data.shorter_side must be positive");
  if (data.min_objects == 0 || data.min_objects > data.max_objects)
    throw ConfigError("data: need 1 <= min_objects <= max_objects");
  if (bench_timed == 0) throw ConfigError("bench.timed must be positive");
}

}  // namespace frcnn
