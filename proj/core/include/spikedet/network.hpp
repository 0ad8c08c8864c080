#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikedet/box.hpp"
#include "spikedet/nn_ops.hpp"
#include "spikedet/qcfs.hpp"
#include "spikedet/spiking.hpp"
#include "spikedet/tensor.hpp"

namespace spikedet {

enum class LayerKind : std::uint8_t {
  kConv,
  kBatchNorm,
  kActivation,
  kAvgPool,
  kMaxPool,
  kUpsample,
  kConcat,
  kDetectHead,
};

enum class ActivationKind : std::uint8_t { kLeakyRelu, kQcfs, kIfNeuron };

const char* to_string(LayerKind k);
const char* to_string(ActivationKind k);

struct ActivationSpec {
  ActivationKind kind = ActivationKind::kLeakyRelu;
  float leaky_slope = 0.1f;
  QCFSParams qcfs;    // kQcfs
  float theta = 1.0f; // kIfNeuron
};

struct PoolSpec {
  int k = 2;
  int s = 2;
};

struct UpsampleSpec {
  int factor = 2;
};

struct Anchor {
  float w = 0.0f;
  float h = 0.0f;
};

struct DetectHeadSpec {
  int class_count = 0;
  std::vector<Anchor> anchors;
  int stride = 8;

  int anchor_count() const { return static_cast<int>(anchors.size()); }
  int channels() const { return anchor_count() * (5 + class_count); }
};

// Edge id of the network input tensor.
inline constexpr int kInputEdge = -1;

// One node of the layer graph. `inputs` holds producer layer ids (or
// kInputEdge); they must reference earlier layers, which keeps the graph
// acyclic by construction.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  std::vector<int> inputs{kInputEdge};

  ConvSpec conv;          // kConv
  BatchNormSpec bn;       // kBatchNorm
  ActivationSpec act;     // kActivation
  PoolSpec pool;          // kAvgPool / kMaxPool
  UpsampleSpec upsample;  // kUpsample
  DetectHeadSpec head;    // kDetectHead
};

struct NetworkGraph {
  std::vector<int> input_shape; // {C, H, W}
  int class_count = 0;
  std::vector<LayerSpec> layers;

  // Checks edge references, single network input, terminal detect head and
  // per-layer shape consistency. Throws std::invalid_argument on violation.
  void validate() const;

  // Output shape (C, H, W) of every layer for the given input shape.
  std::vector<std::vector<int>> infer_shapes() const;

  // Ids of activation layers in execution order.
  std::vector<int> activation_layer_ids() const;
  int detect_head_id() const; // -1 if absent
};

// Raw detect-head grid: logits straight from the head convolution, laid out
// as N x anchors*(5+class_count) x GH x GW with per-anchor channel order
// (tx, ty, tw, th, objectness, class scores...). Objectness and class
// probabilities come out of sigmoid decoding via the accessors below.
struct DetectionOutput {
  Tensor raw;
  DetectHeadSpec head;

  int batch() const { return raw.dim(0); }
  int grid_h() const { return raw.dim(2); }
  int grid_w() const { return raw.dim(3); }

  float logit(int n, int anchor, int field, int gy, int gx) const {
    return raw.at(n, anchor * (5 + head.class_count) + field, gy, gx);
  }
  // sigmoid(objectness logit) in [0, 1]
  double objectness(int n, int anchor, int gy, int gx) const;
  // decoded box for one grid cell/anchor
  Box decode_box(int n, int anchor, int gy, int gx) const;
};

struct Detection {
  int class_id = 0;
  float confidence = 0.0f;
  Box box;
};

// Per-layer spike totals of an SNN run (energy proxy).
struct SpikeStats {
  struct Layer {
    int layer_id = 0;
    std::string name;
    std::size_t neurons = 0; // per timestep
    std::size_t spikes = 0;  // total over the run
  };
  std::vector<Layer> layers;
  int T = 0;

  std::size_t total_spikes() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.spikes;
    return n;
  }
};

// How spike trains propagate to downstream layers in forward_snn:
// kPerStep sends the binary spike tensor through the rest of the network at
// every timestep; kRateAveraged collapses each IF layer to its firing rate
// before the next layer runs.
enum class SnnMode : std::uint8_t { kPerStep, kRateAveraged };

const char* to_string(SnnMode m);

struct SnnResult {
  DetectionOutput output;
  SpikeStats stats;
};

// Layer-by-layer inference. Requires a network without IF activations;
// batch norm uses running statistics. `image` is CHW or NCHW.
DetectionOutput forward_ann(const NetworkGraph& net, const Tensor& image);

// Timestepped simulation with constant input encoding: the image is
// presented unchanged at every step. The detect head decodes the
// time-averaged pre-head tensor. Requires at least one IF activation.
SnnResult forward_snn(const NetworkGraph& net, const Tensor& image, int T, SnnMode mode);

// Sigmoid/anchor box decoding followed by per-class greedy non-max
// suppression. Returns one detection list per batch image, sorted by
// confidence descending.
std::vector<std::vector<Detection>> decode_detections(const DetectionOutput& out,
                                                      float conf_threshold, float nms_iou);

// Fixed miniature BConv/pool detector for 64x64 inputs with a single
// stride-8 detect head. QCFS and IF variants use average pooling; the
// leaky-ReLU variant uses max pooling. Weight init is seeded.
NetworkGraph build_tiny_detector(int class_count, int L, ActivationKind activation,
                                 std::uint64_t seed = 1);

// Folds every conv->batchnorm pair into the convolution (exact at
// inference). Throws if a batch-norm layer does not directly follow a conv.
NetworkGraph fold_batch_norm(const NetworkGraph& net);

} // namespace spikedet
