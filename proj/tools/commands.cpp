#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "spikedet/converter.hpp"
#include "spikedet/csv.hpp"
#include "spikedet/dataset.hpp"
#include "spikedet/network_io.hpp"
#include "spikedet/parallel.hpp"
#include "spikedet/synthetic.hpp"
#include "spikedet/trainer.hpp"

namespace spikedet::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed ^ (0x9e3779b97f4a7c15ull * (stream + 1));
}

// synthetic data streams: train and val sets never overlap for a given seed
std::vector<LabeledImage> synth_train(int n, std::uint64_t seed) {
  return generate_synthetic_dataset(n, mix_seed(seed, 1));
}
std::vector<LabeledImage> synth_val(int n, std::uint64_t seed) {
  return generate_synthetic_dataset(n, mix_seed(seed, 2));
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw std::runtime_error("empty integer list '" + s + "'");
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::runtime_error("empty number list '" + s + "'");
  return out;
}

void write_effective_config(CLI::App* sub, const std::string& out_dir) {
  std::ofstream f(fs::path(out_dir) / "effective-config.txt");
  f << sub->config_to_str(true, false);
}

void prepare_out(CLI::App* sub, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_effective_config(sub, out_dir);
}

ActivationKind activation_from_string(const std::string& s) {
  if (s == "qcfs") return ActivationKind::kQcfs;
  if (s == "relu" || s == "leaky_relu" || s == "leaky-relu") return ActivationKind::kLeakyRelu;
  if (s == "if" || s == "if_neuron") return ActivationKind::kIfNeuron;
  throw std::runtime_error("unknown activation '" + s + "'");
}

std::vector<LabeledImage> load_dir_dataset(const std::string& root, Split split,
                                           std::uint64_t seed) {
  SplitSpec spec;
  spec.split = split;
  spec.seed = seed;
  std::vector<LabeledImage> out;
  for (const YoloSample& s : load_yolo_dataset(root, spec)) out.push_back(load_labeled_image(s));
  return out;
}

struct TrainArgs {
  std::string activation = "qcfs";
  int L = 4;
  int epochs = 50;
  int batch_size = 16;
  double lr = 0.02;
  double momentum = 0.9;
  std::string lr_schedule = "constant";
  std::uint64_t seed = 1;
  int n_train = 1000;
  int n_val = 200;
  std::string data;
  int class_count = 3;
  double loss_box = 0.05, loss_obj = 1.0, loss_cls = 0.5;
  std::string out = "runs/train";
  int threads = 1;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  int n = 200;
  std::uint64_t seed = 1;
  double conf = 0.01, nms = 0.45;
  std::string out = "runs/eval";
  int threads = 1;
};

struct ConvertArgs {
  std::string checkpoint;
  std::string plan = "all";
  std::string ordinals;
  int T = 4;
  std::string mode = "rate-averaged";
  bool no_fold_bn = false;
  std::string out = "runs/convert";
  int threads = 1;
};

struct SimulateArgs {
  std::string checkpoint;
  int T = 4;
  std::string mode = "rate-averaged";
  std::string data;
  int n = 200;
  std::uint64_t seed = 1;
  double conf = 0.01, nms = 0.45;
  std::string out = "runs/simulate";
  int threads = 1;
};

struct AnalyzeArgs {
  std::string T_list = "4,8,16";
  std::string L_list = "4,8,16";
  std::string phi_list = "0.5";
  double lambda = 1.0;
  std::uint64_t n = 1000000;
  double range_lo = 0.0, range_hi = 0.0; // 0,0 -> default [-lambda, 2*lambda]
  std::uint64_t seed = 1;
  std::string out = "runs/analyze-error";
  int threads = 1;
};

struct GenDataArgs {
  int n = 1000;
  std::uint64_t seed = 1;
  std::string out = "runs/dataset";
};

SnnMode mode_from_string(const std::string& s) {
  if (s == "per-step") return SnnMode::kPerStep;
  if (s == "rate-averaged") return SnnMode::kRateAveraged;
  throw std::runtime_error("unknown propagation mode '" + s + "'");
}

void run_train(CLI::App* sub, const TrainArgs& a) {
  set_num_threads(a.threads);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = static_cast<float>(a.lr);
  cfg.momentum = static_cast<float>(a.momentum);
  cfg.lr_schedule = a.lr_schedule;
  cfg.seed = a.seed;
  cfg.L = a.L;
  cfg.activation = activation_from_string(a.activation);
  cfg.loss_weights.box = static_cast<float>(a.loss_box);
  cfg.loss_weights.objectness = static_cast<float>(a.loss_obj);
  cfg.loss_weights.classification = static_cast<float>(a.loss_cls);

  std::vector<LabeledImage> train_set, val_set;
  int class_count = a.class_count;
  if (a.data.empty()) {
    train_set = synth_train(a.n_train, a.seed);
    val_set = synth_val(a.n_val, a.seed);
    class_count = kSyntheticClassCount;
  } else {
    SplitSpec sp;
    sp.seed = a.seed;
    train_set = load_dir_dataset(a.data, Split::kTrain, a.seed);
    val_set = load_dir_dataset(a.data, Split::kVal, a.seed);
  }

  NetworkGraph net = build_tiny_detector(class_count, cfg.L, cfg.activation, cfg.seed);
  prepare_out(sub, a.out);
  TrainResult result = train(std::move(net), train_set, val_set, cfg);
  save_network(result.net, (fs::path(a.out) / "checkpoint.spknet").string());
  write_curve_csv(result.curve, (fs::path(a.out) / "curves.csv").string());
  if (!result.curve.empty())
    std::cout << "final mAP@.5 " << csv_num(result.curve.back().map50) << ", best F1 "
              << csv_num(result.curve.back().f1_best) << "\n";
}

void run_eval(CLI::App* sub, const EvalArgs& a) {
  set_num_threads(a.threads);
  if (!fs::exists(a.checkpoint))
    throw std::runtime_error("checkpoint '" + a.checkpoint + "' does not exist");
  const NetworkGraph net = load_network(a.checkpoint);
  const std::vector<LabeledImage> data = a.data.empty()
                                             ? synth_val(a.n, a.seed)
                                             : load_dir_dataset(a.data, Split::kTest, a.seed);
  prepare_out(sub, a.out);
  const MetricsReport r = evaluate_detector(net, data, static_cast<float>(a.conf),
                                            static_cast<float>(a.nms));
  write_metrics_json(r, (fs::path(a.out) / "metrics.json").string());
  write_metrics_csv(r, (fs::path(a.out) / "metrics.csv").string());
  write_pr_curves_csv(r, (fs::path(a.out) / "pr_curves.csv").string());
  write_f1_curve_csv(r, (fs::path(a.out) / "f1_curve.csv").string());
  std::cout << "mAP@.5 " << csv_num(r.map50) << ", mAP@.5:.95 " << csv_num(r.map5095)
            << ", best F1 " << csv_num(r.best_f1) << " @ conf " << csv_num(r.best_f1_conf)
            << "\n";
}

void run_convert(CLI::App* sub, const ConvertArgs& a) {
  set_num_threads(a.threads);
  if (!fs::exists(a.checkpoint))
    throw std::runtime_error("checkpoint '" + a.checkpoint + "' does not exist");
  const NetworkGraph net = load_network(a.checkpoint);
  SurgeryPlan plan;
  plan.target = surgery_target_from_string(a.plan);
  if (plan.target == SurgeryTarget::kExplicit) plan.ordinals = parse_int_list(a.ordinals);
  plan.T = a.T;
  plan.mode = mode_from_string(a.mode);
  plan.fold_bn = !a.no_fold_bn;
  const NetworkGraph snn = convert(net, plan);
  prepare_out(sub, a.out);
  save_network(snn, (fs::path(a.out) / "converted.spknet").string());
  int n_if = 0;
  for (const LayerSpec& L : snn.layers)
    n_if += L.kind == LayerKind::kActivation && L.act.kind == ActivationKind::kIfNeuron;
  std::cout << "converted " << n_if << " activation(s) to IF neurons\n";
}

void run_simulate(CLI::App* sub, const SimulateArgs& a) {
  set_num_threads(a.threads);
  if (!fs::exists(a.checkpoint))
    throw std::runtime_error("checkpoint '" + a.checkpoint + "' does not exist");
  const NetworkGraph net = load_network(a.checkpoint);
  const std::vector<LabeledImage> data = a.data.empty()
                                             ? synth_val(a.n, a.seed)
                                             : load_dir_dataset(a.data, Split::kTest, a.seed);
  prepare_out(sub, a.out);
  SpikeStats stats;
  const MetricsReport r =
      evaluate_detector_snn(net, data, a.T, mode_from_string(a.mode),
                            static_cast<float>(a.conf), static_cast<float>(a.nms), 16, &stats);
  write_metrics_json(r, (fs::path(a.out) / "metrics.json").string());
  write_metrics_csv(r, (fs::path(a.out) / "metrics.csv").string());
  CsvWriter w((fs::path(a.out) / "spike_stats.csv").string(),
              {"layer_id", "layer", "neurons_per_step", "T", "total_spikes"});
  for (const auto& l : stats.layers)
    w.row({std::to_string(l.layer_id), l.name, std::to_string(l.neurons),
           std::to_string(stats.T), std::to_string(l.spikes)});
  std::cout << "mAP@.5 " << csv_num(r.map50) << " at T=" << a.T << " (" << a.mode << "), "
            << stats.total_spikes() << " spikes total\n";
}

void run_analyze_error(CLI::App* sub, const AnalyzeArgs& a) {
  set_num_threads(a.threads);
  const std::vector<int> Ts = parse_int_list(a.T_list);
  const std::vector<int> Ls = parse_int_list(a.L_list);
  const std::vector<double> phis = parse_double_list(a.phi_list);
  prepare_out(sub, a.out);
  std::vector<ExperimentCsvRow> rows;
  for (int T : Ts)
    for (int L : Ls)
      for (double phi : phis) {
        QCFSParams p;
        p.lambda = static_cast<float>(a.lambda);
        p.L = L;
        p.phi = static_cast<float>(phi);
        ValueRange range;
        if (a.range_lo == 0.0 && a.range_hi == 0.0) {
          range.lo = -a.lambda;
          range.hi = 2.0 * a.lambda;
        } else {
          range.lo = a.range_lo;
          range.hi = a.range_hi;
        }
        const ConversionReport r = conversion_error_empirical(
            p, p.lambda, T, a.n, range, mix_seed(a.seed, static_cast<std::uint64_t>(T * 1000 + L)));
        rows.push_back(to_csv_row(r));
      }
  write_experiment_csv(rows, (fs::path(a.out) / "error_analysis.csv").string());
  std::cout << rows.size() << " configurations analyzed\n";
}

void run_gen_data(CLI::App* sub, const GenDataArgs& a) {
  const auto scenes = generate_synthetic_dataset(a.n, a.seed);
  prepare_out(sub, a.out);
  const fs::path images = fs::path(a.out) / "images";
  const fs::path labels = fs::path(a.out) / "labels";
  fs::create_directories(images);
  fs::create_directories(labels);
  char name[32];
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::snprintf(name, sizeof(name), "scene_%06zu", i);
    save_ppm(scenes[i].image, (images / (std::string(name) + ".ppm")).string());
    std::ofstream lf(labels / (std::string(name) + ".txt"));
    const float size = static_cast<float>(kSyntheticImageSize);
    for (const GroundTruth& g : scenes[i].truths)
      lf << g.class_id << ' ' << csv_num(g.box.cx / size) << ' ' << csv_num(g.box.cy / size)
         << ' ' << csv_num(g.box.w / size) << ' ' << csv_num(g.box.h / size) << '\n';
  }
  std::cout << scenes.size() << " scenes written to " << a.out << "\n";
}

} // namespace

void register_commands(CLI::App& app) {
  // train
  {
    auto a = std::make_shared<TrainArgs>();
    CLI::App* sub = app.add_subcommand("train", "Train the tiny detector");
    sub->add_option("--activation", a->activation, "qcfs | relu")->capture_default_str();
    sub->add_option("--L", a->L, "QCFS quantization steps")->capture_default_str();
    sub->add_option("--epochs", a->epochs)->capture_default_str();
    sub->add_option("--batch-size", a->batch_size)->capture_default_str();
    sub->add_option("--lr", a->lr, "learning rate")->capture_default_str();
    sub->add_option("--momentum", a->momentum)->capture_default_str();
    sub->add_option("--lr-schedule", a->lr_schedule, "constant | cosine")->capture_default_str();
    sub->add_option("--seed", a->seed)->capture_default_str();
    sub->add_option("--n-train", a->n_train, "synthetic training scenes")->capture_default_str();
    sub->add_option("--n-val", a->n_val, "synthetic validation scenes")->capture_default_str();
    sub->add_option("--data", a->data, "YOLO-format dataset root (instead of synthetic)");
    sub->add_option("--class-count", a->class_count, "classes when --data is used")
        ->capture_default_str();
    sub->add_option("--loss-box", a->loss_box)->capture_default_str();
    sub->add_option("--loss-obj", a->loss_obj)->capture_default_str();
    sub->add_option("--loss-cls", a->loss_cls)->capture_default_str();
    sub->add_option("--out", a->out, "output directory")->capture_default_str();
    sub->add_option("--threads", a->threads)->capture_default_str();
    sub->set_config("--config");
    sub->callback([sub, a] { run_train(sub, *a); });
  }
  // eval
  {
    auto a = std::make_shared<EvalArgs>();
    CLI::App* sub = app.add_subcommand("eval", "Evaluate a checkpoint");
    sub->add_option("--checkpoint", a->checkpoint, "network checkpoint")->required();
    sub->add_option("--data", a->data, "YOLO-format dataset root (instead of synthetic)");
    sub->add_option("--n", a->n, "synthetic eval scenes")->capture_default_str();
    sub->add_option("--seed", a->seed)->capture_default_str();
    sub->add_option("--conf", a->conf, "confidence threshold")->capture_default_str();
    sub->add_option("--nms", a->nms, "NMS IoU threshold")->capture_default_str();
    sub->add_option("--out", a->out)->capture_default_str();
    sub->add_option("--threads", a->threads)->capture_default_str();
    sub->set_config("--config");
    sub->callback([sub, a] { run_eval(sub, *a); });
  }
  // convert
  {
    auto a = std::make_shared<ConvertArgs>();
    CLI::App* sub = app.add_subcommand("convert", "Replace QCFS activations with IF neurons");
    sub->add_option("--checkpoint", a->checkpoint)->required();
    sub->add_option("--plan", a->plan, "first-only | last-only | all | explicit")
        ->capture_default_str();
    sub->add_option("--ordinals", a->ordinals, "comma list for --plan explicit");
    sub->add_option("--T", a->T, "intended timesteps (stored in the plan)")->capture_default_str();
    sub->add_option("--mode", a->mode, "per-step | rate-averaged")->capture_default_str();
    sub->add_flag("--no-fold-bn", a->no_fold_bn, "skip batch-norm folding");
    sub->add_option("--out", a->out)->capture_default_str();
    sub->add_option("--threads", a->threads)->capture_default_str();
    sub->set_config("--config");
    sub->callback([sub, a] { run_convert(sub, *a); });
  }
  // simulate
  {
    auto a = std::make_shared<SimulateArgs>();
    CLI::App* sub = app.add_subcommand("simulate", "Run a converted network over an eval set");
    sub->add_option("--checkpoint", a->checkpoint)->required();
    sub->add_option("--T", a->T, "timesteps")->capture_default_str();
    sub->add_option("--mode", a->mode, "per-step | rate-averaged")->capture_default_str();
    sub->add_option("--data", a->data, "YOLO-format dataset root (instead of synthetic)");
    sub->add_option("--n", a->n, "synthetic eval scenes")->capture_default_str();
    sub->add_option("--seed", a->seed)->capture_default_str();
    sub->add_option("--conf", a->conf)->capture_default_str();
    sub->add_option("--nms", a->nms)->capture_default_str();
    sub->add_option("--out", a->out)->capture_default_str();
    sub->add_option("--threads", a->threads)->capture_default_str();
    sub->set_config("--config");
    sub->callback([sub, a] { run_simulate(sub, *a); });
  }
  // analyze-error
  {
    auto a = std::make_shared<AnalyzeArgs>();
    CLI::App* sub = app.add_subcommand(
        "analyze-error", "Monte Carlo statistics of the SNN-vs-QCFS conversion error");
    sub->add_option("--T", a->T_list, "comma list of timesteps")->capture_default_str();
    sub->add_option("--L", a->L_list, "comma list of quantization steps")->capture_default_str();
    sub->add_option("--phi", a->phi_list, "comma list of shifts")->capture_default_str();
    sub->add_option("--lambda", a->lambda, "threshold lambda (= theta)")->capture_default_str();
    sub->add_option("--n", a->n, "samples per configuration")->capture_default_str();
    sub->add_option("--range-lo", a->range_lo, "sample range low (default -lambda)");
    sub->add_option("--range-hi", a->range_hi, "sample range high (default 2*lambda)");
    sub->add_option("--seed", a->seed)->capture_default_str();
    sub->add_option("--out", a->out)->capture_default_str();
    sub->add_option("--threads", a->threads)->capture_default_str();
    sub->set_config("--config");
    sub->callback([sub, a] { run_analyze_error(sub, *a); });
  }
  // gen-data
  {
    auto a = std::make_shared<GenDataArgs>();
    CLI::App* sub = app.add_subcommand("gen-data", "Write a synthetic dataset in YOLO layout");
    sub->add_option("--n", a->n, "number of scenes")->capture_default_str();
    sub->add_option("--seed", a->seed)->capture_default_str();
    sub->add_option("--out", a->out)->capture_default_str();
    sub->set_config("--config");
    sub->callback([sub, a] { run_gen_data(sub, *a); });
  }
  app.require_subcommand(1);
}

} // namespace spikedet::cli
