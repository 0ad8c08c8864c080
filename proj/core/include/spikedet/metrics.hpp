#pragma once

#include <string>
#include <vector>

#include "spikedet/box.hpp"
#include "spikedet/network.hpp"

namespace spikedet {

// One labeled object.
struct GroundTruth {
  int class_id = 0;
  Box box;
};

// Class-agnostic scored detection used by average_precision; the caller
// splits detections by class first.
struct ScoredDetection {
  int image_id = 0;
  float confidence = 0.0f;
  Box box;
};

struct TruthBox {
  int image_id = 0;
  Box box;
};

// Area under the all-points-interpolated precision-recall curve. Detections
// are sorted by descending confidence (stable); each truth is matched at
// most once, by the highest-IoU unmatched truth of the detection's image,
// counting a TP when that IoU reaches iou_thresh. No truths or no
// detections gives 0.
double average_precision(std::vector<ScoredDetection> dets, const std::vector<TruthBox>& truths,
                         double iou_thresh);

// Detection metrics over a fixed IoU grid {0.5, 0.55, ..., 0.95} and a
// 101-point confidence grid.
struct MetricsReport {
  int class_count = 0;
  std::vector<double> iou_grid;
  std::vector<std::vector<double>> ap;  // [class][iou index]; 0 for absent classes
  std::vector<bool> class_present;      // class appears in truths or detections
  double map50 = 0.0;
  double map5095 = 0.0;

  std::vector<double> conf_grid; // 101 thresholds 0.00 .. 1.00
  std::vector<std::vector<double>> precision; // [class][conf index]
  std::vector<std::vector<double>> recall;
  std::vector<std::vector<double>> f1;
  std::vector<double> mean_precision; // over present classes
  std::vector<double> mean_recall;
  std::vector<double> mean_f1;
  double best_f1 = 0.0;
  double best_f1_conf = 0.0;
};

MetricsReport full_report(const std::vector<std::vector<Detection>>& dets_per_image,
                          const std::vector<std::vector<GroundTruth>>& truths_per_image,
                          int class_count);

void write_metrics_json(const MetricsReport& r, const std::string& path);
void write_metrics_csv(const MetricsReport& r, const std::string& path);
// P/R vs confidence curves, one value column per class plus the mean.
void write_pr_curves_csv(const MetricsReport& r, const std::string& path);
void write_f1_curve_csv(const MetricsReport& r, const std::string& path);

} // namespace spikedet
