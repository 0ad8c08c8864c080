#include "spikedet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "spikedet/csv.hpp"

namespace spikedet {

namespace {

// TP/FP flags in descending-confidence order for one class.
struct MatchedDets {
  std::vector<float> conf; // sorted descending
  std::vector<char> is_tp;
  std::size_t npos = 0;
};

MatchedDets match_greedy(std::vector<ScoredDetection> dets, const std::vector<TruthBox>& truths,
                         double iou_thresh) {
  std::stable_sort(dets.begin(), dets.end(), [](const ScoredDetection& a, const ScoredDetection& b) {
    return a.confidence > b.confidence;
  });
  std::map<int, std::vector<std::size_t>> truths_by_image;
  for (std::size_t i = 0; i < truths.size(); ++i)
    truths_by_image[truths[i].image_id].push_back(i);
  std::vector<char> matched(truths.size(), 0);

  MatchedDets out;
  out.npos = truths.size();
  out.conf.reserve(dets.size());
  out.is_tp.reserve(dets.size());
  for (const ScoredDetection& d : dets) {
    double best = 0.0;
    std::size_t best_t = truths.size();
    const auto it = truths_by_image.find(d.image_id);
    if (it != truths_by_image.end()) {
      for (std::size_t t : it->second) {
        if (matched[t]) continue;
        const double v = iou(d.box, truths[t].box);
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
    }
    const bool tp = best_t < truths.size() && best >= iou_thresh;
    if (tp) matched[best_t] = 1;
    out.conf.push_back(d.confidence);
    out.is_tp.push_back(tp ? 1 : 0);
  }
  return out;
}

double ap_from_matches(const MatchedDets& m) {
  if (m.npos == 0 || m.conf.empty()) return 0.0;
  const std::size_t n = m.conf.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += m.is_tp[i];
    recall[i] = static_cast<double>(tp) / static_cast<double>(m.npos);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // precision envelope (max over suffix), then sum recall steps
  std::vector<double> env(n);
  double run = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    run = std::max(run, precision[i]);
    env[i] = run;
  }
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_r) {
      ap += (recall[i] - prev_r) * env[i];
      prev_r = recall[i];
    }
  }
  return ap;
}

} // namespace

double average_precision(std::vector<ScoredDetection> dets, const std::vector<TruthBox>& truths,
                         double iou_thresh) {
  for (const ScoredDetection& d : dets)
    if (!(d.confidence >= 0.0f && d.confidence <= 1.0f))
      throw std::invalid_argument("average_precision: confidence outside [0, 1]");
  return ap_from_matches(match_greedy(std::move(dets), truths, iou_thresh));
}

MetricsReport full_report(const std::vector<std::vector<Detection>>& dets_per_image,
                          const std::vector<std::vector<GroundTruth>>& truths_per_image,
                          int class_count) {
  if (dets_per_image.size() != truths_per_image.size())
    throw std::invalid_argument("full_report: detection and truth image counts differ");
  MetricsReport r;
  r.class_count = class_count;
  for (int k = 0; k < 10; ++k) r.iou_grid.push_back(0.5 + 0.05 * k);
  for (int k = 0; k <= 100; ++k) r.conf_grid.push_back(k / 100.0);

  const std::size_t n_img = dets_per_image.size();
  r.ap.assign(static_cast<std::size_t>(class_count), std::vector<double>(r.iou_grid.size(), 0.0));
  r.class_present.assign(static_cast<std::size_t>(class_count), false);
  r.precision.assign(static_cast<std::size_t>(class_count),
                     std::vector<double>(r.conf_grid.size(), 0.0));
  r.recall = r.precision;
  r.f1 = r.precision;

  for (int c = 0; c < class_count; ++c) {
    std::vector<ScoredDetection> dets;
    std::vector<TruthBox> truths;
    for (std::size_t img = 0; img < n_img; ++img) {
      for (const Detection& d : dets_per_image[img])
        if (d.class_id == c)
          dets.push_back(ScoredDetection{static_cast<int>(img), d.confidence, d.box});
      for (const GroundTruth& g : truths_per_image[img])
        if (g.class_id == c) truths.push_back(TruthBox{static_cast<int>(img), g.box});
    }
    r.class_present[static_cast<std::size_t>(c)] = !dets.empty() || !truths.empty();
    for (std::size_t k = 0; k < r.iou_grid.size(); ++k)
      r.ap[static_cast<std::size_t>(c)][k] = average_precision(dets, truths, r.iou_grid[k]);

    // confidence sweep at IoU 0.5; greedy matching is prefix-stable in
    // confidence order, so one matching pass serves every threshold
    const MatchedDets m = match_greedy(dets, truths, 0.5);
    for (std::size_t k = 0; k < r.conf_grid.size(); ++k) {
      const double thr = r.conf_grid[k];
      std::size_t tp = 0, kept = 0;
      for (std::size_t i = 0; i < m.conf.size() && m.conf[i] >= thr; ++i) {
        ++kept;
        tp += m.is_tp[i];
      }
      const double p = kept > 0 ? static_cast<double>(tp) / static_cast<double>(kept) : 0.0;
      const double rec = m.npos > 0 ? static_cast<double>(tp) / static_cast<double>(m.npos) : 0.0;
      r.precision[static_cast<std::size_t>(c)][k] = p;
      r.recall[static_cast<std::size_t>(c)][k] = rec;
      r.f1[static_cast<std::size_t>(c)][k] = p + rec > 0.0 ? 2.0 * p * rec / (p + rec) : 0.0;
    }
  }

  int present = 0;
  for (int c = 0; c < class_count; ++c) present += r.class_present[static_cast<std::size_t>(c)];
  r.mean_precision.assign(r.conf_grid.size(), 0.0);
  r.mean_recall.assign(r.conf_grid.size(), 0.0);
  r.mean_f1.assign(r.conf_grid.size(), 0.0);
  if (present > 0) {
    double sum50 = 0.0, sum5095 = 0.0;
    for (int c = 0; c < class_count; ++c) {
      if (!r.class_present[static_cast<std::size_t>(c)]) continue;
      sum50 += r.ap[static_cast<std::size_t>(c)][0];
      sum5095 += std::accumulate(r.ap[static_cast<std::size_t>(c)].begin(),
                                 r.ap[static_cast<std::size_t>(c)].end(), 0.0) /
                 static_cast<double>(r.iou_grid.size());
      for (std::size_t k = 0; k < r.conf_grid.size(); ++k) {
        r.mean_precision[k] += r.precision[static_cast<std::size_t>(c)][k];
        r.mean_recall[k] += r.recall[static_cast<std::size_t>(c)][k];
        r.mean_f1[k] += r.f1[static_cast<std::size_t>(c)][k];
      }
    }
    r.map50 = sum50 / present;
    r.map5095 = sum5095 / present;
    for (std::size_t k = 0; k < r.conf_grid.size(); ++k) {
      r.mean_precision[k] /= present;
      r.mean_recall[k] /= present;
      r.mean_f1[k] /= present;
    }
  }

  r.best_f1 = 0.0;
  r.best_f1_conf = 0.0;
  for (std::size_t k = 0; k < r.conf_grid.size(); ++k) {
    if (r.mean_f1[k] > r.best_f1) {
      r.best_f1 = r.mean_f1[k];
      r.best_f1_conf = r.conf_grid[k];
    }
  }
  return r;
}

void write_metrics_json(const MetricsReport& r, const std::string& path) {
  nlohmann::json j;
  j["class_count"] = r.class_count;
  j["map50"] = r.map50;
  j["map50_95"] = r.map5095;
  j["best_f1"] = r.best_f1;
  j["best_f1_confidence"] = r.best_f1_conf;
  j["iou_grid"] = r.iou_grid;
  j["ap"] = r.ap;
  j["class_present"] = r.class_present;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_metrics_json: cannot open '" + path + "'");
  f << j.dump(2) << '\n';
}

void write_metrics_csv(const MetricsReport& r, const std::string& path) {
  CsvWriter w(path, {"class", "iou_thresh", "ap"});
  for (int c = 0; c < r.class_count; ++c)
    for (std::size_t k = 0; k < r.iou_grid.size(); ++k)
      w.row({std::to_string(c), csv_num(r.iou_grid[k]), csv_num(r.ap[static_cast<std::size_t>(c)][k])});
}

namespace {

void write_curve(const std::string& path, const MetricsReport& r,
                 const std::vector<std::vector<double>>& per_class,
                 const std::vector<double>& mean, const char* value_name) {
  std::vector<std::string> header{"confidence"};
  for (int c = 0; c < r.class_count; ++c)
    header.push_back(std::string(value_name) + "_class" + std::to_string(c));
  header.push_back(std::string(value_name) + "_mean");
  CsvWriter w(path, header);
  for (std::size_t k = 0; k < r.conf_grid.size(); ++k) {
    std::vector<std::string> cells{csv_num(r.conf_grid[k])};
    for (int c = 0; c < r.class_count; ++c)
      cells.push_back(csv_num(per_class[static_cast<std::size_t>(c)][k]));
    cells.push_back(csv_num(mean[k]));
    w.row(cells);
  }
}

} // namespace

void write_pr_curves_csv(const MetricsReport& r, const std::string& path) {
  std::vector<std::string> header{"confidence"};
  for (int c = 0; c < r.class_count; ++c) header.push_back("precision_class" + std::to_string(c));
  header.push_back("precision_mean");
  for (int c = 0; c < r.class_count; ++c) header.push_back("recall_class" + std::to_string(c));
  header.push_back("recall_mean");
  CsvWriter w(path, header);
  for (std::size_t k = 0; k < r.conf_grid.size(); ++k) {
    std::vector<std::string> cells{csv_num(r.conf_grid[k])};
    for (int c = 0; c < r.class_count; ++c)
      cells.push_back(csv_num(r.precision[static_cast<std::size_t>(c)][k]));
    cells.push_back(csv_num(r.mean_precision[k]));
    for (int c = 0; c < r.class_count; ++c)
      cells.push_back(csv_num(r.recall[static_cast<std::size_t>(c)][k]));
    cells.push_back(csv_num(r.mean_recall[k]));
    w.row(cells);
  }
}

void write_f1_curve_csv(const MetricsReport& r, const std::string& path) {
  write_curve(path, r, r.f1, r.mean_f1, "f1");
}

} // namespace spikedet
