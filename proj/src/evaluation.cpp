#include "frcnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace frcnn {

std::vector<double> default_iou_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back((50.0 + 5.0 * i) / 100.0);
  return g;
}

double RecallCurve::at(double tau) const {
  if (iou.empty()) throw std::logic_error("recall curve is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < iou.size(); ++i)
    if (std::abs(iou[i] - tau) < std::abs(iou[best] - tau)) best = i;
  return recall[best];
}

RecallCurve recall_curve(std::span<const std::vector<ScoredBox>> proposals,
                         std::span<const std::vector<Box>> gt, std::size_t top_n,
                         std::span<const double> iou_grid) {
  if (proposals.size() != gt.size())
    throw std::invalid_argument("recall_curve: " + std::to_string(proposals.size()) +
                                " proposal lists for " + std::to_string(gt.size()) +
                                " images");
  RecallCurve out;
  out.iou.assign(iou_grid.begin(), iou_grid.end());
  out.recall.assign(iou_grid.size(), 0.0);
  out.proposals_per_image = top_n;
  std::vector<std::size_t> hits(iou_grid.size(), 0);
  for (std::size_t img = 0; img < gt.size(); ++img) {
    const auto& props = proposals[img];
    const std::size_t n = std::min(top_n, props.size());
    for (const Box& g : gt[img]) {
      double best = 0.0;
      for (std::size_t i = 0; i < n; ++i) best = std::max(best, iou(props[i].box, g));
      for (std::size_t t = 0; t < iou_grid.size(); ++t)
        if (best >= iou_grid[t]) ++hits[t];
      ++out.num_gt;
    }
  }
  if (out.num_gt == 0) throw std::invalid_argument("recall_curve: no ground-truth boxes");
  for (std::size_t t = 0; t < hits.size(); ++t)
    out.recall[t] = static_cast<double>(hits[t]) / static_cast<double>(out.num_gt);
  return out;
}

PrCurve pr_curve(std::span<const std::vector<ScoredBox>> detections,
                 std::span<const GroundTruth> gt, int class_id, double iou_thresh) {
  if (detections.size() != gt.size())
    throw std::invalid_argument("pr_curve: detection and gt image counts differ");
  struct Det {
    double score;
    std::size_t image;
    Box box;
  };
  std::vector<Det> dets;
  std::vector<std::vector<char>> used(gt.size());
  PrCurve out;
  for (std::size_t img = 0; img < gt.size(); ++img) {
    for (const auto& d : detections[img])
      if (d.class_id == class_id) dets.push_back({d.score, img, d.box});
    used[img].assign(gt[img].boxes.size(), 0);
    for (int c : gt[img].classes)
      if (c == class_id) ++out.num_gt;
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Det& a, const Det& b) { return a.score > b.score; });
  std::size_t tp = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& g = gt[dets[i].image];
    double best = -1.0;
    std::ptrdiff_t match = -1;
    for (std::size_t j = 0; j < g.boxes.size(); ++j) {
      if (g.classes[j] != class_id || used[dets[i].image][j]) continue;
      const double v = iou(dets[i].box, g.boxes[j]);
      if (v >= iou_thresh && v > best) {
        best = v;
        match = static_cast<std::ptrdiff_t>(j);
      }
    }
    if (match >= 0) {
      used[dets[i].image][static_cast<std::size_t>(match)] = 1;
      ++tp;
    }
    out.precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    out.recall.push_back(out.num_gt ? static_cast<double>(tp) / static_cast<double>(out.num_gt)
                                    : 0.0);
  }
  return out;
}

std::optional<double> average_precision(const PrCurve& pr) {
  if (pr.num_gt == 0) return std::nullopt;
  std::vector<double> rec{0.0}, prec{0.0};
  rec.insert(rec.end(), pr.recall.begin(), pr.recall.end());
  prec.insert(prec.end(), pr.precision.begin(), pr.precision.end());
  rec.push_back(1.0);
  prec.push_back(0.0);
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < rec.size(); ++i)
    if (rec[i + 1] != rec[i]) ap += (rec[i + 1] - rec[i]) * prec[i + 1];
  return ap;
}

std::optional<double> voc_ap(std::span<const std::vector<ScoredBox>> detections,
                             std::span<const GroundTruth> gt, int class_id,
                             double iou_thresh) {
  return average_precision(pr_curve(detections, gt, class_id, iou_thresh));
}

MapResult mean_ap(std::span<const std::vector<ScoredBox>> detections,
                  std::span<const GroundTruth> gt, std::size_t num_classes,
                  double iou_thresh) {
  MapResult out;
  double sum = 0.0;
  for (std::size_t c = 1; c <= num_classes; ++c) {
    out.per_class.push_back(voc_ap(detections, gt, static_cast<int>(c), iou_thresh));
    if (out.per_class.back()) {
      sum += *out.per_class.back();
      ++out.classes_used;
    }
  }
  out.map = out.classes_used ? sum / static_cast<double>(out.classes_used) : 0.0;
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string recall_csv(const RecallCurve& curve) {
  std::string s = "tau,recall,n_proposals\n";
  for (std::size_t i = 0; i < curve.iou.size(); ++i)
    s += fmt(curve.iou[i]) + "," + fmt(curve.recall[i]) + "," +
         std::to_string(curve.proposals_per_image) + "\n";
  return s;
}

std::string map_csv(const MapResult& result) {
  std::string s = "class,ap\n";
  for (std::size_t c = 0; c < result.per_class.size(); ++c)
    s += std::to_string(c + 1) + "," +
         (result.per_class[c] ? fmt(*result.per_class[c]) : std::string("excluded")) + "\n";
  s += "mAP," + fmt(result.map) + "\n";
  return s;
}

std::string timing_csv(const TimingReport& r) {
  return "stage,median_ms\nconv," + fmt(r.conv_ms) + "\nproposal," + fmt(r.proposal_ms) +
         "\nregion," + fmt(r.region_ms) + "\ntotal," + fmt(r.total_ms) +
         "\nimages_per_second," + fmt(r.images_per_second) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace frcnn
