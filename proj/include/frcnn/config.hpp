#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "frcnn/dataio.hpp"
#include "frcnn/model.hpp"
#include "frcnn/training.hpp"

namespace frcnn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScheduleSpec {
  std::size_t iters = 0;
  double lr = 0.0;
  double lr_drop_fraction = 0.75;  // lr * 0.1 from iteration floor(iters * fraction)
};

/// Every tunable of a run. Serialized as flat `section.key=value` lines.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t shorter_side = 128;
  GenConfig data;
  ModelConfig model;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  // Keys: rpn, step1..step4, joint, onestage.
  std::map<std::string, ScheduleSpec> schedules;
  std::size_t bench_warmup = 5;
  std::size_t bench_timed = 50;

  RunConfig();

  /// Applies one `key=value` assignment. Throws ConfigError on unknown keys
  /// or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Parses `key=value` lines; '#' starts a comment. Errors carry the line number.
  void load(const std::string& text, const std::string& origin = "config");
  void load_file(const std::filesystem::path& path);

  /// Every key with its effective value, sorted, loadable by load().
  std::string dump() const;
  static std::vector<std::string> keys();

  TrainSchedule schedule(const std::string& name) const;
  void validate() const;
};

}  // namespace frcnn
