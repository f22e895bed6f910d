#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "frcnn/model.hpp"
#include "frcnn/optim.hpp"

namespace frcnn {

struct TrainSchedule {
  std::size_t total_iters = 5000;
  double lr = 0.001;
  std::size_t lr_drop_at = 3750;  // lr * 0.1 from this iteration on
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 1;

  void validate() const;
  double lr_at(std::size_t iteration) const;
  SgdConfig sgd_at(std::size_t iteration) const;

  /// Drop placed at 75% of the run.
  static TrainSchedule make(std::size_t iters, double lr, std::uint64_t seed);
};

struct LossRecord {
  static constexpr double kNone = std::numeric_limits<double>::quiet_NaN();
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss_cls = kNone;
  double loss_reg = kNone;
  double loss_det_cls = kNone;
  double loss_det_reg = kNone;
};

struct LossLog {
  bool has_rpn = false;
  bool has_det = false;
  std::vector<LossRecord> rows;
  std::size_t skipped = 0;
  double seconds = 0.0;

  std::string csv() const;
  /// Mean of a column over rows [begin, end), NaN rows excluded.
  double mean(double LossRecord::*column, std::size_t begin, std::size_t end) const;
};

struct TrainState {
  FasterRcnn model;
  bool shared_frozen = false;
  std::size_t iteration = 0;
};

/// Deterministic epoch-wise shuffled image order.
class ImageOrder {
 public:
  ImageOrder(std::size_t n, Rng rng);
  std::size_t next();

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng rng_;
};

/// One image per iteration; anchors sampled per the assignment config.
LossLog train_rpn(std::span<const Sample> data, TrainState& state,
                  const TrainSchedule& schedule);

/// Trains the region-wise head (and the backbone unless frozen) on fixed
/// per-image proposals.
LossLog train_detector(std::span<const Sample> data,
                       std::span<const std::vector<Box>> proposals, TrainState& state,
                       const TrainSchedule& schedule);

/// Proposal boxes for every sample, for feeding the detector stage.
std::vector<std::vector<Box>> proposals_for(const FasterRcnn& model,
                                            std::span<const Sample> data,
                                            const ProposalParams& params);

/// Backbone bytes digest; equal digests mean bit-identical weights.
std::uint64_t backbone_checksum(FasterRcnn& model);

struct AlternatingResult {
  TrainState state;  // unified network after step 4
  std::array<LossLog, 4> logs;
  std::array<std::uint64_t, 4> backbone_after{};  // backbone digest after each step
};

using StepHook = std::function<void(int step, FasterRcnn& model, const LossLog& log)>;

AlternatingResult alternate_4step(std::span<const Sample> data, const ModelConfig& cfg,
                                  const std::array<TrainSchedule, 4>& schedules,
                                  std::uint64_t init_seed, const StepHook& on_step = {});

struct JointResult {
  TrainState state;
  LossLog log;
};

/// Sums both losses per iteration; proposals enter the detector as constants.
JointResult joint_train(std::span<const Sample> data, const ModelConfig& cfg,
                        const TrainSchedule& schedule, std::uint64_t init_seed);

struct OneStageResult {
  OneStageModel model;
  LossLog log;
};

OneStageResult train_onestage(std::span<const Sample> data, const ModelConfig& cfg,
                              const TrainSchedule& schedule, std::uint64_t init_seed);

}  // namespace frcnn
