#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikedet/dataset.hpp"
#include "spikedet/loss.hpp"
#include "spikedet/metrics.hpp"
#include "spikedet/network.hpp"

namespace spikedet {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  float learning_rate = 0.02f;
  float momentum = 0.9f;
  std::uint64_t seed = 1;
  int L = 4;                                            // QCFS quantization steps
  ActivationKind activation = ActivationKind::kQcfs;
  LossWeights loss_weights;
  std::string lr_schedule = "constant"; // "constant" | "cosine"
  float bn_momentum = 0.1f;
  float lambda_min = 1e-3f; // lower clamp for trained QCFS thresholds
  float eval_conf_threshold = 0.01f;
  float eval_nms_iou = 0.45f;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0f)) throw std::invalid_argument("TrainConfig: bad learning rate");
    if (lr_schedule != "constant" && lr_schedule != "cosine")
      throw std::invalid_argument("TrainConfig: unknown lr schedule '" + lr_schedule + "'");
  }
};

struct EpochStats {
  int epoch = 0;
  double total_loss = 0.0;
  double box_loss = 0.0;
  double obj_loss = 0.0;
  double cls_loss = 0.0;
  double map50 = 0.0;
  double map5095 = 0.0;
  double f1_best = 0.0;
  double conf_at_f1_best = 0.0;
};

struct TrainResult {
  NetworkGraph net;
  std::vector<EpochStats> curve;
};

// Raised when the loss stops being finite.
struct TrainDivergedError : std::runtime_error {
  explicit TrainDivergedError(const std::string& what) : std::runtime_error(what) {}
};

// ---- autograd tape (exposed for gradient-check tests) ----

struct ForwardTape {
  Tensor input;
  std::vector<Tensor> outs;
  std::vector<BatchNormCache> bn;
};

// Per-layer parameter gradients; empty tensors for layers without that
// parameter kind.
struct LayerGrads {
  Tensor conv_w, conv_b;
  Tensor bn_gamma, bn_beta;
  float qcfs_lambda = 0.0f;
};

// Training-mode forward: batch statistics for batch norm (running stats in
// `net` are updated in place with bn_momentum). IF activations are refused.
DetectionOutput forward_train(NetworkGraph& net, const Tensor& batch, float bn_momentum,
                              ForwardTape& tape);

// Backpropagates d loss / d raw-head-logits through the tape.
std::vector<LayerGrads> backward_train(const NetworkGraph& net, const ForwardTape& tape,
                                       const Tensor& grad_raw);

// v <- mu * v + g;  p <- p - lr * v
void sgd_update(float* p, const float* g, float* v, std::size_t n, float lr, float mu);

// ---- evaluation helpers ----

MetricsReport evaluate_detector(const NetworkGraph& net, const std::vector<LabeledImage>& data,
                                float conf_threshold, float nms_iou, int batch_size = 16);

MetricsReport evaluate_detector_snn(const NetworkGraph& net, const std::vector<LabeledImage>& data,
                                    int T, SnnMode mode, float conf_threshold, float nms_iou,
                                    int batch_size = 16, SpikeStats* stats_accum = nullptr);

// ---- training ----

// SGD with momentum over the full backprop path; QCFS thresholds train via
// their surrogate gradients. Emits one EpochStats row per epoch (validation
// metrics from forward_ann on val_data).
TrainResult train(NetworkGraph net, const std::vector<LabeledImage>& train_data,
                  const std::vector<LabeledImage>& val_data, const TrainConfig& cfg);

void write_curve_csv(const std::vector<EpochStats>& curve, const std::string& path);

} // namespace spikedet
