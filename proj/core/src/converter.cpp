#include "spikedet/converter.hpp"

#include <algorithm>
#include <cmath>

#include "spikedet/csv.hpp"
#include "spikedet/rng.hpp"
#include "spikedet/spiking.hpp"
#include "spikedet/trainer.hpp"

namespace spikedet {

const char* to_string(SurgeryTarget t) {
  switch (t) {
    case SurgeryTarget::kFirstOnly: return "first-only";
    case SurgeryTarget::kLastOnly: return "last-only";
    case SurgeryTarget::kAll: return "all";
    case SurgeryTarget::kExplicit: return "explicit";
  }
  return "?";
}

SurgeryTarget surgery_target_from_string(const std::string& s) {
  if (s == "first-only") return SurgeryTarget::kFirstOnly;
  if (s == "last-only") return SurgeryTarget::kLastOnly;
  if (s == "all") return SurgeryTarget::kAll;
  if (s == "explicit") return SurgeryTarget::kExplicit;
  throw std::invalid_argument("unknown surgery plan '" + s + "'");
}

NetworkGraph convert(const NetworkGraph& net, const SurgeryPlan& plan) {
  NetworkGraph out = plan.fold_bn ? fold_batch_norm(net) : net;

  const std::vector<int> acts = out.activation_layer_ids();
  if (acts.empty()) throw std::invalid_argument("convert: network has no activation layers");

  std::vector<int> selected;
  switch (plan.target) {
    case SurgeryTarget::kFirstOnly: selected = {0}; break;
    case SurgeryTarget::kLastOnly: selected = {static_cast<int>(acts.size()) - 1}; break;
    case SurgeryTarget::kAll:
      for (std::size_t i = 0; i < acts.size(); ++i) selected.push_back(static_cast<int>(i));
      break;
    case SurgeryTarget::kExplicit: selected = plan.ordinals; break;
  }
  if (selected.empty()) throw std::invalid_argument("convert: selection matches no layer");

  for (int ord : selected) {
    if (ord < 0 || ord >= static_cast<int>(acts.size()))
      throw std::invalid_argument("convert: activation ordinal " + std::to_string(ord) +
                                  " out of range (network has " + std::to_string(acts.size()) +
                                  " activation layers)");
    LayerSpec& L = out.layers[static_cast<std::size_t>(acts[static_cast<std::size_t>(ord)])];
    if (L.act.kind != ActivationKind::kQcfs)
      throw std::invalid_argument("convert: activation #" + std::to_string(ord) + " ('" + L.name +
                                  "') is " + to_string(L.act.kind) +
                                  ", not qcfs; nothing to convert");
    L.act.theta = L.act.qcfs.lambda; // theta takes the trained threshold
    L.act.kind = ActivationKind::kIfNeuron;
  }
  out.validate();
  return out;
}

ConversionReport conversion_error_empirical(const QCFSParams& p, float theta, int T,
                                            std::size_t N, ValueRange range, std::uint64_t seed) {
  p.validate();
  if (N < 1) throw std::invalid_argument("conversion_error_empirical: N must be >= 1");
  if (T < 1) throw std::invalid_argument("conversion_error_empirical: T must be >= 1");
  if (theta != p.lambda)
    throw std::invalid_argument("conversion_error_empirical: theta must equal lambda "
                                "(thresholds are tied at conversion)");
  if (!(range.hi > range.lo))
    throw std::invalid_argument("conversion_error_empirical: empty sample range");

  Rng rng(seed ^ 0xe99c0ull);
  double sum = 0.0, sumsq = 0.0, max_abs = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double z = rng.uniform(range.lo, range.hi);
    const double err = if_rate_constant_scalar(z, theta, T) - qcfs_forward_scalar(z, p);
    sum += err;
    sumsq += err * err;
    max_abs = std::max(max_abs, std::abs(err));
  }
  ConversionReport r;
  r.n = N;
  r.T = T;
  r.L = p.L;
  r.phi = p.phi;
  r.lambda = p.lambda;
  r.theta = theta;
  r.mean_err = sum / static_cast<double>(N);
  r.std_err = N > 1 ? std::sqrt(std::max(0.0, (sumsq - sum * sum / static_cast<double>(N)) /
                                                  static_cast<double>(N - 1)))
                    : 0.0;
  r.max_abs_err = max_abs;
  return r;
}

std::vector<SurgeryExperimentCell> layer_surgery_experiment(
    const NetworkGraph& qcfs_net, const std::vector<LabeledImage>& eval_set,
    const std::vector<int>& T_values, float conf_threshold, float nms_iou) {
  if (eval_set.empty()) throw std::invalid_argument("layer_surgery_experiment: empty eval set");
  std::vector<SurgeryExperimentCell> table;
  for (SurgeryTarget target : {SurgeryTarget::kFirstOnly, SurgeryTarget::kLastOnly}) {
    for (SnnMode mode : {SnnMode::kPerStep, SnnMode::kRateAveraged}) {
      for (int T : T_values) {
        SurgeryPlan plan;
        plan.target = target;
        plan.T = T;
        plan.mode = mode;
        const NetworkGraph snn = convert(qcfs_net, plan);
        const MetricsReport r =
            evaluate_detector_snn(snn, eval_set, T, mode, conf_threshold, nms_iou);
        table.push_back(SurgeryExperimentCell{target, mode, T, r.map50});
      }
    }
  }
  return table;
}

void write_experiment_csv(const std::vector<ExperimentCsvRow>& rows, const std::string& path) {
  CsvWriter w(path, {"plan", "mode", "T", "L", "phi", "lambda", "map50", "mean_err", "std_err",
                     "max_err", "n"});
  for (const ExperimentCsvRow& r : rows)
    w.row({r.plan, r.mode, r.T, r.L, r.phi, r.lambda, r.map50, r.mean_err, r.std_err, r.max_err,
           r.n});
}

ExperimentCsvRow to_csv_row(const ConversionReport& r) {
  ExperimentCsvRow row;
  row.plan = "error-analysis";
  row.mode = "";
  row.T = std::to_string(r.T);
  row.L = std::to_string(r.L);
  row.phi = csv_num(r.phi);
  row.lambda = csv_num(r.lambda);
  row.map50 = "";
  row.mean_err = csv_num(r.mean_err);
  row.std_err = csv_num(r.std_err);
  row.max_err = csv_num(r.max_abs_err);
  row.n = std::to_string(r.n);
  return row;
}

ExperimentCsvRow to_csv_row(const SurgeryExperimentCell& c, int L, double phi, double lambda) {
  ExperimentCsvRow row;
  row.plan = to_string(c.plan);
  row.mode = to_string(c.mode);
  row.T = std::to_string(c.T);
  row.L = std::to_string(L);
  row.phi = csv_num(phi);
  row.lambda = csv_num(lambda);
  row.map50 = csv_num(c.map50);
  return row;
}

} // namespace spikedet
