#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frcnn/boxes.hpp"

namespace frcnn {

/// IoU thresholds 0.50, 0.55, ..., 1.00.
std::vector<double> default_iou_grid();

struct RecallCurve {
  std::vector<double> iou;
  std::vector<double> recall;
  std::size_t proposals_per_image = 0;
  std::size_t num_gt = 0;

  /// Recall at the grid point nearest to tau.
  double at(double tau) const;
};

/// Fraction of ground-truth boxes covered by at least one of the top-n
/// proposals at IoU >= tau, per tau in the grid. Proposals must be sorted by
/// descending score. Throws std::invalid_argument when there is no gt box.
RecallCurve recall_curve(std::span<const std::vector<ScoredBox>> proposals,
                         std::span<const std::vector<Box>> gt, std::size_t top_n,
                         std::span<const double> iou_grid);

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<int> classes;
};

/// Precision/recall after each detection, in descending score order.
struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t num_gt = 0;
};

/// Greedy matching of class detections to free gt boxes at IoU >= thresh.
PrCurve pr_curve(std::span<const std::vector<ScoredBox>> detections,
                 std::span<const GroundTruth> gt, int class_id, double iou_thresh);

/// Area under the monotone precision envelope. Empty when there is no gt.
std::optional<double> average_precision(const PrCurve& pr);

std::optional<double> voc_ap(std::span<const std::vector<ScoredBox>> detections,
                             std::span<const GroundTruth> gt, int class_id,
                             double iou_thresh = 0.5);

struct MapResult {
  std::vector<std::optional<double>> per_class;  // index c-1 for class c
  double map = 0.0;
  std::size_t classes_used = 0;
};

/// Mean AP over classes 1..num_classes that have ground truth.
MapResult mean_ap(std::span<const std::vector<ScoredBox>> detections,
                  std::span<const GroundTruth> gt, std::size_t num_classes,
                  double iou_thresh = 0.5);

struct TimingReport {
  double conv_ms = 0.0;
  double proposal_ms = 0.0;
  double region_ms = 0.0;
  double total_ms = 0.0;
  double images_per_second = 0.0;
  std::size_t images = 0;
};

double median(std::vector<double> values);

std::string recall_csv(const RecallCurve& curve);
std::string map_csv(const MapResult& result);
std::string timing_csv(const TimingReport& report);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace frcnn
