#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikedet/dataset.hpp"
#include "spikedet/network.hpp"
#include "spikedet/qcfs.hpp"

namespace spikedet {

enum class SurgeryTarget : std::uint8_t { kFirstOnly, kLastOnly, kAll, kExplicit };

const char* to_string(SurgeryTarget t);
SurgeryTarget surgery_target_from_string(const std::string& s);

// Which QCFS activations to replace with IF neurons. Ordinals index the
// activation layers in execution order (0 = first activation).
struct SurgeryPlan {
  SurgeryTarget target = SurgeryTarget::kFirstOnly;
  std::vector<int> ordinals; // kExplicit only
  int T = 4;                 // timesteps for subsequent simulation
  SnnMode mode = SnnMode::kRateAveraged;
  bool fold_bn = true;
};

// Replaces the selected QCFS activations with IF neurons (theta = trained
// lambda); batch norm is folded into the convolutions first (exact at
// inference). Every selected position must currently hold a QCFS
// activation, otherwise the surgery refuses.
NetworkGraph convert(const NetworkGraph& net, const SurgeryPlan& plan);

struct ValueRange {
  double lo = -1.0;
  double hi = 2.0;
};

// Sample statistics of the SNN-vs-QCFS output gap on constant scalar
// inputs: err = if_rate(z, theta, T) - qcfs(z).
struct ConversionReport {
  double mean_err = 0.0;
  double std_err = 0.0;     // sample standard deviation
  double max_abs_err = 0.0; // pointwise max over the sample
  std::size_t n = 0;
  int T = 0;
  int L = 0;
  double phi = 0.0;
  double lambda = 0.0;
  double theta = 0.0;
};

// Draws N inputs i.i.d. uniform from `range` and accumulates the error
// statistics. theta must equal p.lambda.
ConversionReport conversion_error_empirical(const QCFSParams& p, float theta, int T,
                                            std::size_t N, ValueRange range, std::uint64_t seed);

// One row of the partial-conversion experiment grid.
struct SurgeryExperimentCell {
  SurgeryTarget plan = SurgeryTarget::kFirstOnly;
  SnnMode mode = SnnMode::kPerStep;
  int T = 0;
  double map50 = 0.0;
};

// Converts the trained QCFS net for every plan in {first-only, last-only} x
// {per-step, rate-averaged} x T_values and evaluates mAP@.5 on eval_set.
std::vector<SurgeryExperimentCell> layer_surgery_experiment(
    const NetworkGraph& qcfs_net, const std::vector<LabeledImage>& eval_set,
    const std::vector<int>& T_values, float conf_threshold = 0.01f, float nms_iou = 0.45f);

// Unified experiment CSV with columns
// (plan, mode, T, L, phi, lambda, map50, mean_err, std_err, max_err, n);
// cells that do not apply to a row kind stay empty.
struct ExperimentCsvRow {
  std::string plan, mode, T, L, phi, lambda, map50, mean_err, std_err, max_err, n;
};

void write_experiment_csv(const std::vector<ExperimentCsvRow>& rows, const std::string& path);

ExperimentCsvRow to_csv_row(const ConversionReport& r);
ExperimentCsvRow to_csv_row(const SurgeryExperimentCell& c, int L, double phi, double lambda);

} // namespace spikedet
