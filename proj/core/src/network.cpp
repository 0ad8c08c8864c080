#include "spikedet/network.hpp"

#include <algorithm>
#include <cmath>

#include "spikedet/mathutil.hpp"
#include "spikedet/rng.hpp"

namespace spikedet {

namespace {

constexpr float kSizeLogitClamp = 8.0f; // keeps exp(tw) finite in box decoding

} // namespace

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kUpsample: return "upsample-nearest";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kDetectHead: return "detect-head";
  }
  return "?";
}

const char* to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::kLeakyRelu: return "leaky_relu";
    case ActivationKind::kQcfs: return "qcfs";
    case ActivationKind::kIfNeuron: return "if_neuron";
  }
  return "?";
}

const char* to_string(SnnMode m) {
  return m == SnnMode::kPerStep ? "per-step" : "rate-averaged";
}

std::vector<std::vector<int>> NetworkGraph::infer_shapes() const {
  if (input_shape.size() != 3)
    throw std::invalid_argument("NetworkGraph: input_shape must be (C, H, W)");
  std::vector<std::vector<int>> shapes(layers.size());
  int input_refs = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& L = layers[i];
    const std::size_t want_inputs = L.kind == LayerKind::kConcat ? 2 : 1;
    if (L.inputs.size() != want_inputs)
      throw std::invalid_argument("layer '" + L.name + "': expected " +
                                  std::to_string(want_inputs) + " inputs, has " +
                                  std::to_string(L.inputs.size()));
    std::vector<std::vector<int>> in;
    for (int ref : L.inputs) {
      if (ref == kInputEdge) {
        ++input_refs;
        in.push_back(input_shape);
      } else if (ref >= 0 && ref < static_cast<int>(i)) {
        in.push_back(shapes[static_cast<std::size_t>(ref)]);
      } else {
        throw std::invalid_argument("layer '" + L.name + "': input edge " + std::to_string(ref) +
                                    " does not reference an earlier layer");
      }
    }
    const int C = in[0][0], H = in[0][1], W = in[0][2];
    switch (L.kind) {
      case LayerKind::kConv: {
        L.conv.validate();
        if (C != L.conv.in_channels)
          throw std::invalid_argument("layer '" + L.name + "': conv expects " +
                                      std::to_string(L.conv.in_channels) + " channels, got " +
                                      std::to_string(C));
        const int k = L.conv.kernel_size, s = L.conv.stride, p = L.conv.padding;
        if (H + 2 * p < k || W + 2 * p < k)
          throw std::invalid_argument("layer '" + L.name + "': spatial dims too small");
        shapes[i] = {L.conv.out_channels, (H + 2 * p - k) / s + 1, (W + 2 * p - k) / s + 1};
        break;
      }
      case LayerKind::kBatchNorm:
        L.bn.validate();
        if (C != L.bn.channels())
          throw std::invalid_argument("layer '" + L.name + "': batchnorm channel mismatch");
        shapes[i] = in[0];
        break;
      case LayerKind::kActivation:
        if (L.act.kind == ActivationKind::kQcfs) L.act.qcfs.validate();
        if (L.act.kind == ActivationKind::kIfNeuron && !(L.act.theta > 0.0f))
          throw std::invalid_argument("layer '" + L.name + "': theta must be positive");
        shapes[i] = in[0];
        break;
      case LayerKind::kAvgPool:
      case LayerKind::kMaxPool:
        if (L.pool.k <= 0 || L.pool.s <= 0)
          throw std::invalid_argument("layer '" + L.name + "': pool k and s must be positive");
        if (H < L.pool.k || W < L.pool.k)
          throw std::invalid_argument("layer '" + L.name + "': spatial dims smaller than window");
        shapes[i] = {C, (H - L.pool.k) / L.pool.s + 1, (W - L.pool.k) / L.pool.s + 1};
        break;
      case LayerKind::kUpsample:
        if (L.upsample.factor <= 0)
          throw std::invalid_argument("layer '" + L.name + "': upsample factor must be positive");
        shapes[i] = {C, H * L.upsample.factor, W * L.upsample.factor};
        break;
      case LayerKind::kConcat:
        if (in[0][1] != in[1][1] || in[0][2] != in[1][2])
          throw std::invalid_argument("layer '" + L.name + "': concat inputs have unequal " +
                                      "spatial dims");
        shapes[i] = {in[0][0] + in[1][0], H, W};
        break;
      case LayerKind::kDetectHead:
        if (i + 1 != layers.size())
          throw std::invalid_argument("layer '" + L.name + "': detect-head must be terminal");
        if (L.head.class_count < 1 || L.head.anchors.empty())
          throw std::invalid_argument("layer '" + L.name + "': detect-head needs classes and " +
                                      "anchors");
        if (C != L.head.channels())
          throw std::invalid_argument("layer '" + L.name + "': detect-head expects " +
                                      std::to_string(L.head.channels()) + " channels, got " +
                                      std::to_string(C));
        shapes[i] = in[0];
        break;
    }
  }
  if (input_refs != 1)
    throw std::invalid_argument("NetworkGraph: network input must be consumed exactly once, " +
                                std::to_string(input_refs) + " references found");
  return shapes;
}

void NetworkGraph::validate() const {
  if (layers.empty()) throw std::invalid_argument("NetworkGraph: no layers");
  (void)infer_shapes();
}

std::vector<int> NetworkGraph::activation_layer_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::kActivation) ids.push_back(static_cast<int>(i));
  return ids;
}

int NetworkGraph::detect_head_id() const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::kDetectHead) return static_cast<int>(i);
  return -1;
}

double DetectionOutput::objectness(int n, int anchor, int gy, int gx) const {
  return sigmoid(logit(n, anchor, 4, gy, gx));
}

Box DetectionOutput::decode_box(int n, int anchor, int gy, int gx) const {
  const float s = static_cast<float>(head.stride);
  const Anchor& a = head.anchors[static_cast<std::size_t>(anchor)];
  Box b;
  b.cx = (static_cast<float>(sigmoid(logit(n, anchor, 0, gy, gx))) + static_cast<float>(gx)) * s;
  b.cy = (static_cast<float>(sigmoid(logit(n, anchor, 1, gy, gx))) + static_cast<float>(gy)) * s;
  b.w = a.w * std::exp(std::clamp(logit(n, anchor, 2, gy, gx), -kSizeLogitClamp, kSizeLogitClamp));
  b.h = a.h * std::exp(std::clamp(logit(n, anchor, 3, gy, gx), -kSizeLogitClamp, kSizeLogitClamp));
  return b;
}

namespace {

Tensor batchify(const NetworkGraph& net, const Tensor& image, const char* where) {
  if (image.ndim() == 3) {
    if (image.shape != net.input_shape)
      throw std::invalid_argument(std::string(where) + ": image shape " + image.shape_str() +
                                  " != network input shape");
    Tensor t = image;
    t.shape.insert(t.shape.begin(), 1);
    return t;
  }
  if (image.ndim() == 4) {
    const std::vector<int> chw(image.shape.begin() + 1, image.shape.end());
    if (chw != net.input_shape)
      throw std::invalid_argument(std::string(where) + ": image shape " + image.shape_str() +
                                  " != network input shape");
    return image;
  }
  throw std::invalid_argument(std::string(where) + ": image must be CHW or NCHW");
}

// Single pass over the graph. `if_handler` maps an IF activation layer's
// input to its output for this pass (null means IF layers are an error).
template <typename IfHandler>
Tensor run_layers(const NetworkGraph& net, const Tensor& input, std::vector<Tensor>& outs,
                  const IfHandler& if_handler) {
  outs.resize(net.layers.size());
  const Tensor* head_in = nullptr;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& L = net.layers[i];
    const Tensor& x = L.inputs[0] == kInputEdge ? input : outs[static_cast<std::size_t>(L.inputs[0])];
    switch (L.kind) {
      case LayerKind::kConv: outs[i] = conv2d(x, L.conv); break;
      case LayerKind::kBatchNorm: outs[i] = batch_norm_infer(x, L.bn); break;
      case LayerKind::kActivation:
        switch (L.act.kind) {
          case ActivationKind::kLeakyRelu: outs[i] = leaky_relu(x, L.act.leaky_slope); break;
          case ActivationKind::kQcfs: outs[i] = qcfs_forward(x, L.act.qcfs); break;
          case ActivationKind::kIfNeuron: outs[i] = if_handler(static_cast<int>(i), L, x); break;
        }
        break;
      case LayerKind::kAvgPool: outs[i] = avg_pool2d(x, L.pool.k, L.pool.s); break;
      case LayerKind::kMaxPool: outs[i] = max_pool2d(x, L.pool.k, L.pool.s); break;
      case LayerKind::kUpsample: outs[i] = upsample_nearest(x, L.upsample.factor); break;
      case LayerKind::kConcat: {
        const Tensor& y =
            L.inputs[1] == kInputEdge ? input : outs[static_cast<std::size_t>(L.inputs[1])];
        outs[i] = concat_channels(x, y);
        break;
      }
      case LayerKind::kDetectHead:
        outs[i] = x;
        head_in = &outs[i];
        break;
    }
  }
  return head_in ? *head_in : outs.back();
}

} // namespace

DetectionOutput forward_ann(const NetworkGraph& net, const Tensor& image) {
  net.validate();
  const Tensor input = batchify(net, image, "forward_ann");
  const int head_id = net.detect_head_id();
  if (head_id < 0) throw std::invalid_argument("forward_ann: network has no detect head");
  std::vector<Tensor> outs;
  Tensor raw = run_layers(net, input, outs, [](int, const LayerSpec& L, const Tensor&) -> Tensor {
    throw std::invalid_argument("forward_ann: network contains IF activation layer '" + L.name +
                                "'; use forward_snn for converted networks");
  });
  return DetectionOutput{std::move(raw), net.layers[static_cast<std::size_t>(head_id)].head};
}

SnnResult forward_snn(const NetworkGraph& net, const Tensor& image, int T, SnnMode mode) {
  if (T < 1) throw std::invalid_argument("forward_snn: T must be >= 1");
  net.validate();
  const Tensor input = batchify(net, image, "forward_snn");
  const int head_id = net.detect_head_id();
  if (head_id < 0) throw std::invalid_argument("forward_snn: network has no detect head");

  bool has_if = false;
  for (const LayerSpec& L : net.layers)
    has_if |= L.kind == LayerKind::kActivation && L.act.kind == ActivationKind::kIfNeuron;
  if (!has_if)
    throw std::invalid_argument("forward_snn: network has no IF activation; use forward_ann");

  SnnResult res;
  res.stats.T = T;
  std::vector<std::size_t> spike_count(net.layers.size(), 0);

  std::vector<Tensor> outs;
  Tensor raw;
  if (mode == SnnMode::kRateAveraged) {
    // One pass; each IF layer runs its own T-step constant-input simulation
    // and hands the firing rate downstream.
    raw = run_layers(net, input, outs, [&](int id, const LayerSpec& L, const Tensor& x) {
      SpikeTrace trace = if_run_constant(x, L.act.theta, T);
      spike_count[static_cast<std::size_t>(id)] += trace.total_spikes();
      return rate_readout(trace);
    });
  } else {
    // True timestepped run: IF membranes persist across steps, binary spike
    // tensors (scaled by theta) flow through downstream layers every step.
    std::vector<IFNeuronState> states(net.layers.size());
    Tensor head_accum;
    for (int t = 0; t < T; ++t) {
      Tensor step_raw = run_layers(net, input, outs, [&](int id, const LayerSpec& L, const Tensor& x) {
        IFNeuronState& st = states[static_cast<std::size_t>(id)];
        if (t == 0) st = if_init(x.shape, L.act.theta);
        Tensor spikes = if_step(st, x);
        std::size_t n = 0;
        for (float v : spikes.data) n += v != 0.0f;
        spike_count[static_cast<std::size_t>(id)] += n;
        for (float& v : spikes.data) v *= L.act.theta;
        return spikes;
      });
      if (t == 0)
        head_accum = std::move(step_raw);
      else
        for (std::size_t i = 0; i < head_accum.numel(); ++i) head_accum[i] += step_raw[i];
    }
    const float inv = 1.0f / static_cast<float>(T);
    for (float& v : head_accum.data) v *= inv;
    raw = std::move(head_accum);
  }

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& L = net.layers[i];
    if (L.kind == LayerKind::kActivation && L.act.kind == ActivationKind::kIfNeuron) {
      SpikeStats::Layer sl;
      sl.layer_id = static_cast<int>(i);
      sl.name = L.name;
      sl.neurons = outs[i].numel();
      sl.spikes = spike_count[i];
      res.stats.layers.push_back(std::move(sl));
    }
  }
  res.output = DetectionOutput{std::move(raw), net.layers[static_cast<std::size_t>(head_id)].head};
  return res;
}

std::vector<std::vector<Detection>> decode_detections(const DetectionOutput& out,
                                                      float conf_threshold, float nms_iou) {
  if (!(conf_threshold >= 0.0f && conf_threshold <= 1.0f) ||
      !(nms_iou >= 0.0f && nms_iou <= 1.0f))
    throw std::invalid_argument("decode_detections: thresholds must be in [0, 1]");
  const int N = out.batch(), A = out.head.anchor_count(), C = out.head.class_count;
  const int GH = out.grid_h(), GW = out.grid_w();

  std::vector<std::vector<Detection>> result(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    std::vector<Detection> cands;
    for (int a = 0; a < A; ++a)
      for (int gy = 0; gy < GH; ++gy)
        for (int gx = 0; gx < GW; ++gx) {
          const double obj = out.objectness(n, a, gy, gx);
          int best_c = 0;
          double best_p = -1.0;
          for (int c = 0; c < C; ++c) {
            const double p = sigmoid(out.logit(n, a, 5 + c, gy, gx));
            if (p > best_p) {
              best_p = p;
              best_c = c;
            }
          }
          const double conf = obj * best_p;
          if (conf >= conf_threshold && conf > 0.0)
            cands.push_back(Detection{best_c, static_cast<float>(conf),
                                      out.decode_box(n, a, gy, gx)});
        }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    // greedy per-class NMS
    std::vector<Detection> kept;
    for (const Detection& d : cands) {
      bool suppressed = false;
      for (const Detection& k : kept)
        if (k.class_id == d.class_id && iou(k.box, d.box) > nms_iou) {
          suppressed = true;
          break;
        }
      if (!suppressed) kept.push_back(d);
    }
    result[static_cast<std::size_t>(n)] = std::move(kept);
  }
  return result;
}

namespace {

Tensor uniform_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

ConvSpec make_conv(Rng& rng, int cin, int cout, int k, int stride, int pad) {
  ConvSpec c;
  c.in_channels = cin;
  c.out_channels = cout;
  c.kernel_size = k;
  c.stride = stride;
  c.padding = pad;
  const double limit = std::sqrt(6.0 / (cin * k * k));
  c.weights = uniform_tensor(rng, {cout, cin, k, k}, -limit, limit);
  c.bias = Tensor({cout});
  return c;
}

BatchNormSpec make_bn(int channels) {
  BatchNormSpec bn;
  bn.gamma = Tensor::full({channels}, 1.0f);
  bn.beta = Tensor({channels});
  bn.running_mean = Tensor({channels});
  bn.running_var = Tensor::full({channels}, 1.0f);
  bn.epsilon = 1e-5f;
  return bn;
}

ActivationSpec make_act(ActivationKind kind, int L) {
  ActivationSpec a;
  a.kind = kind;
  a.leaky_slope = 0.1f;
  if (kind == ActivationKind::kQcfs) {
    a.qcfs.lambda = 8.0f; // generous initial threshold; trainable
    a.qcfs.L = L;
    a.qcfs.phi = 0.5f;
  }
  a.theta = 1.0f;
  return a;
}

} // namespace

NetworkGraph build_tiny_detector(int class_count, int L, ActivationKind activation,
                                 std::uint64_t seed) {
  if (class_count < 1) throw std::invalid_argument("build_tiny_detector: class_count must be >= 1");
  Rng rng(seed ^ 0x5b1cde7700d37ull);
  NetworkGraph net;
  net.input_shape = {3, 64, 64};
  net.class_count = class_count;

  const LayerKind pool_kind =
      activation == ActivationKind::kLeakyRelu ? LayerKind::kMaxPool : LayerKind::kAvgPool;

  int prev = kInputEdge;
  auto add = [&](LayerSpec l) {
    l.inputs = {prev};
    net.layers.push_back(std::move(l));
    prev = static_cast<int>(net.layers.size()) - 1;
  };
  auto bconv = [&](const std::string& name, int cin, int cout, int k) {
    LayerSpec c;
    c.name = name + "_conv";
    c.kind = LayerKind::kConv;
    c.conv = make_conv(rng, cin, cout, k, 1, k / 2);
    add(std::move(c));
    LayerSpec b;
    b.name = name + "_bn";
    b.kind = LayerKind::kBatchNorm;
    b.bn = make_bn(cout);
    add(std::move(b));
    LayerSpec a;
    a.name = name + "_act";
    a.kind = LayerKind::kActivation;
    a.act = make_act(activation, L);
    add(std::move(a));
  };
  auto pool = [&](const std::string& name) {
    LayerSpec p;
    p.name = name;
    p.kind = pool_kind;
    p.pool = {2, 2};
    add(std::move(p));
  };

  bconv("bconv0", 3, 8, 3);   // 64x64
  pool("pool1");
  bconv("bconv1", 8, 16, 3);  // 32x32
  pool("pool2");
  bconv("bconv2", 16, 24, 3); // 16x16
  bconv("bconv3", 24, 24, 3);
  pool("pool3");
  bconv("bconv4", 24, 32, 3); // 8x8
  bconv("bconv5", 32, 32, 3);
  bconv("bconv6", 32, 32, 3);
  bconv("bconv7", 32, 32, 1);

  DetectHeadSpec head;
  head.class_count = class_count;
  head.anchors = {{12.0f, 12.0f}, {20.0f, 20.0f}, {32.0f, 32.0f}};
  head.stride = 8;

  LayerSpec hc;
  hc.name = "head_conv";
  hc.kind = LayerKind::kConv;
  hc.conv = make_conv(rng, 32, head.channels(), 1, 1, 0);
  // bias the objectness logits low so the untrained net predicts background
  for (int a = 0; a < head.anchor_count(); ++a)
    hc.conv.bias[static_cast<std::size_t>(a * (5 + class_count) + 4)] = -4.0f;
  add(std::move(hc));

  LayerSpec dh;
  dh.name = "detect";
  dh.kind = LayerKind::kDetectHead;
  dh.head = head;
  add(std::move(dh));

  net.validate();
  return net;
}

NetworkGraph fold_batch_norm(const NetworkGraph& net) {
  net.validate();
  NetworkGraph out;
  out.input_shape = net.input_shape;
  out.class_count = net.class_count;

  // consumer counts, to refuse folding through forks
  std::vector<int> consumers(net.layers.size(), 0);
  for (const LayerSpec& L : net.layers)
    for (int ref : L.inputs)
      if (ref >= 0) ++consumers[static_cast<std::size_t>(ref)];

  std::vector<int> remap(net.layers.size(), -1);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& L = net.layers[i];
    if (L.kind == LayerKind::kBatchNorm) {
      const int src = L.inputs[0];
      if (src < 0 || net.layers[static_cast<std::size_t>(src)].kind != LayerKind::kConv)
        throw std::invalid_argument("fold_batch_norm: batchnorm '" + L.name +
                                    "' does not follow a convolution");
      if (consumers[static_cast<std::size_t>(src)] != 1)
        throw std::invalid_argument("fold_batch_norm: convolution feeding '" + L.name +
                                    "' has multiple consumers");
      LayerSpec& folded = out.layers[static_cast<std::size_t>(remap[static_cast<std::size_t>(src)])];
      const BatchNormSpec& bn = L.bn;
      ConvSpec& c = folded.conv;
      const int k = c.kernel_size;
      for (int co = 0; co < c.out_channels; ++co) {
        const double scale =
            bn.gamma[co] / std::sqrt(static_cast<double>(bn.running_var[co]) + bn.epsilon);
        const std::size_t base = static_cast<std::size_t>(co) * c.in_channels * k * k;
        for (std::size_t j = 0; j < static_cast<std::size_t>(c.in_channels) * k * k; ++j)
          c.weights[base + j] = static_cast<float>(c.weights[base + j] * scale);
        c.bias[co] =
            static_cast<float>((c.bias[co] - bn.running_mean[co]) * scale + bn.beta[co]);
      }
      remap[i] = remap[static_cast<std::size_t>(src)];
      continue;
    }
    LayerSpec copy = L;
    for (int& ref : copy.inputs)
      if (ref >= 0) ref = remap[static_cast<std::size_t>(ref)];
    out.layers.push_back(std::move(copy));
    remap[i] = static_cast<int>(out.layers.size()) - 1;
  }
  out.validate();
  return out;
}

} // namespace spikedet
