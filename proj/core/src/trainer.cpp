#include "spikedet/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "spikedet/csv.hpp"
#include "spikedet/qcfs.hpp"
#include "spikedet/rng.hpp"

namespace spikedet {

DetectionOutput forward_train(NetworkGraph& net, const Tensor& batch, float bn_momentum,
                              ForwardTape& tape) {
  net.validate();
  const int head_id = net.detect_head_id();
  if (head_id < 0) throw std::invalid_argument("forward_train: network has no detect head");
  tape.input = batch;
  tape.outs.assign(net.layers.size(), Tensor{});
  tape.bn.assign(net.layers.size(), BatchNormCache{});

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LayerSpec& L = net.layers[i];
    const Tensor& x =
        L.inputs[0] == kInputEdge ? tape.input : tape.outs[static_cast<std::size_t>(L.inputs[0])];
    switch (L.kind) {
      case LayerKind::kConv: tape.outs[i] = conv2d(x, L.conv); break;
      case LayerKind::kBatchNorm:
        tape.outs[i] = batch_norm_train(x, L.bn, bn_momentum, tape.bn[i]);
        break;
      case LayerKind::kActivation:
        switch (L.act.kind) {
          case ActivationKind::kLeakyRelu: tape.outs[i] = leaky_relu(x, L.act.leaky_slope); break;
          case ActivationKind::kQcfs: tape.outs[i] = qcfs_forward(x, L.act.qcfs); break;
          case ActivationKind::kIfNeuron:
            throw std::invalid_argument("forward_train: IF activations are not trainable");
        }
        break;
      case LayerKind::kAvgPool: tape.outs[i] = avg_pool2d(x, L.pool.k, L.pool.s); break;
      case LayerKind::kMaxPool: tape.outs[i] = max_pool2d(x, L.pool.k, L.pool.s); break;
      case LayerKind::kUpsample: tape.outs[i] = upsample_nearest(x, L.upsample.factor); break;
      case LayerKind::kConcat: {
        const Tensor& y = L.inputs[1] == kInputEdge
                              ? tape.input
                              : tape.outs[static_cast<std::size_t>(L.inputs[1])];
        tape.outs[i] = concat_channels(x, y);
        break;
      }
      case LayerKind::kDetectHead: tape.outs[i] = x; break;
    }
  }
  return DetectionOutput{tape.outs[static_cast<std::size_t>(head_id)],
                         net.layers[static_cast<std::size_t>(head_id)].head};
}

std::vector<LayerGrads> backward_train(const NetworkGraph& net, const ForwardTape& tape,
                                       const Tensor& grad_raw) {
  const int head_id = net.detect_head_id();
  if (head_id < 0) throw std::invalid_argument("backward_train: network has no detect head");
  std::vector<LayerGrads> grads(net.layers.size());
  std::vector<Tensor> gout(net.layers.size());

  auto add_to = [&](int ref, const Tensor& g) {
    if (ref == kInputEdge) return; // image gradient is not needed
    Tensor& dst = gout[static_cast<std::size_t>(ref)];
    if (dst.numel() == 0) {
      dst = g;
    } else {
      for (std::size_t k = 0; k < dst.numel(); ++k) dst[k] += g[k];
    }
  };

  gout[static_cast<std::size_t>(head_id)] = grad_raw;

  for (std::size_t ii = net.layers.size(); ii-- > 0;) {
    const LayerSpec& L = net.layers[ii];
    Tensor& gy = gout[ii];
    if (gy.numel() == 0) continue; // no gradient flowed to this layer
    const int src = L.inputs[0];
    const Tensor& x =
        src == kInputEdge ? tape.input : tape.outs[static_cast<std::size_t>(src)];
    switch (L.kind) {
      case LayerKind::kConv: {
        conv2d_backward_params(gy, x, L.conv, grads[ii].conv_w, grads[ii].conv_b);
        if (src != kInputEdge)
          add_to(src, conv2d_backward_input(gy, L.conv, x.dim(2), x.dim(3)));
        break;
      }
      case LayerKind::kBatchNorm:
        add_to(src, batch_norm_backward(gy, L.bn, tape.bn[ii], grads[ii].bn_gamma,
                                        grads[ii].bn_beta));
        break;
      case LayerKind::kActivation:
        switch (L.act.kind) {
          case ActivationKind::kLeakyRelu:
            add_to(src, leaky_relu_backward(gy, x, L.act.leaky_slope));
            break;
          case ActivationKind::kQcfs: {
            QCFSBackward bw = qcfs_layer_backward(gy, x, L.act.qcfs);
            grads[ii].qcfs_lambda = bw.grad_lambda;
            add_to(src, bw.grad_z);
            break;
          }
          case ActivationKind::kIfNeuron:
            throw std::invalid_argument("backward_train: IF activations are not trainable");
        }
        break;
      case LayerKind::kAvgPool:
        add_to(src, avg_pool2d_backward(gy, L.pool.k, L.pool.s, x.dim(2), x.dim(3)));
        break;
      case LayerKind::kMaxPool:
        add_to(src, max_pool2d_backward(gy, x, L.pool.k, L.pool.s));
        break;
      case LayerKind::kUpsample:
        add_to(src, upsample_nearest_backward(gy, L.upsample.factor));
        break;
      case LayerKind::kConcat: {
        const int src2 = L.inputs[1];
        const int c1 = x.dim(1);
        Tensor g1({gy.dim(0), c1, gy.dim(2), gy.dim(3)});
        Tensor g2({gy.dim(0), gy.dim(1) - c1, gy.dim(2), gy.dim(3)});
        const std::size_t plane = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
        for (int n = 0; n < gy.dim(0); ++n) {
          std::copy_n(gy.data.data() + gy.idx4(n, 0, 0, 0), static_cast<std::size_t>(c1) * plane,
                      g1.data.data() + g1.idx4(n, 0, 0, 0));
          std::copy_n(gy.data.data() + gy.idx4(n, c1, 0, 0),
                      static_cast<std::size_t>(gy.dim(1) - c1) * plane,
                      g2.data.data() + g2.idx4(n, 0, 0, 0));
        }
        add_to(src, g1);
        add_to(src2, g2);
        break;
      }
      case LayerKind::kDetectHead:
        add_to(src, gy);
        break;
    }
    gy = Tensor{}; // free as we walk back
  }
  return grads;
}

void sgd_update(float* p, const float* g, float* v, std::size_t n, float lr, float mu) {
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = mu * v[i] + g[i];
    p[i] -= lr * v[i];
  }
}

namespace {

struct Velocity {
  Tensor conv_w, conv_b, bn_gamma, bn_beta;
  float qcfs_lambda = 0.0f;
};

std::vector<Velocity> make_velocity(const NetworkGraph& net) {
  std::vector<Velocity> vel(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& L = net.layers[i];
    if (L.kind == LayerKind::kConv) {
      vel[i].conv_w = Tensor(L.conv.weights.shape);
      vel[i].conv_b = Tensor(L.conv.bias.shape);
    } else if (L.kind == LayerKind::kBatchNorm) {
      vel[i].bn_gamma = Tensor(L.bn.gamma.shape);
      vel[i].bn_beta = Tensor(L.bn.beta.shape);
    }
  }
  return vel;
}

void apply_sgd(NetworkGraph& net, const std::vector<LayerGrads>& grads, std::vector<Velocity>& vel,
               float lr, float mu, float lambda_min) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LayerSpec& L = net.layers[i];
    if (L.kind == LayerKind::kConv && grads[i].conv_w.numel() > 0) {
      sgd_update(L.conv.weights.data.data(), grads[i].conv_w.data.data(),
                 vel[i].conv_w.data.data(), L.conv.weights.numel(), lr, mu);
      sgd_update(L.conv.bias.data.data(), grads[i].conv_b.data.data(), vel[i].conv_b.data.data(),
                 L.conv.bias.numel(), lr, mu);
    } else if (L.kind == LayerKind::kBatchNorm && grads[i].bn_gamma.numel() > 0) {
      sgd_update(L.bn.gamma.data.data(), grads[i].bn_gamma.data.data(),
                 vel[i].bn_gamma.data.data(), L.bn.gamma.numel(), lr, mu);
      sgd_update(L.bn.beta.data.data(), grads[i].bn_beta.data.data(), vel[i].bn_beta.data.data(),
                 L.bn.beta.numel(), lr, mu);
    } else if (L.kind == LayerKind::kActivation && L.act.kind == ActivationKind::kQcfs) {
      float g = grads[i].qcfs_lambda;
      sgd_update(&L.act.qcfs.lambda, &g, &vel[i].qcfs_lambda, 1, lr, mu);
      L.act.qcfs.lambda = std::max(L.act.qcfs.lambda, lambda_min);
    }
  }
}

Tensor stack_images(const std::vector<LabeledImage>& data, const std::vector<std::size_t>& idx,
                    std::size_t begin, std::size_t end) {
  const Tensor& first = data[idx[begin]].image;
  Tensor batch({static_cast<int>(end - begin), first.dim(0), first.dim(1), first.dim(2)});
  const std::size_t sz = first.numel();
  for (std::size_t k = begin; k < end; ++k)
    std::copy_n(data[idx[k]].image.data.data(), sz, batch.data.data() + (k - begin) * sz);
  return batch;
}

} // namespace

MetricsReport evaluate_detector(const NetworkGraph& net, const std::vector<LabeledImage>& data,
                                float conf_threshold, float nms_iou, int batch_size) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GroundTruth>> truths;
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(data.size(), b + static_cast<std::size_t>(batch_size));
    const DetectionOutput out = forward_ann(net, stack_images(data, idx, b, e));
    auto batch_dets = decode_detections(out, conf_threshold, nms_iou);
    for (std::size_t k = b; k < e; ++k) {
      dets.push_back(std::move(batch_dets[k - b]));
      truths.push_back(data[k].truths);
    }
  }
  return full_report(dets, truths, net.class_count);
}

MetricsReport evaluate_detector_snn(const NetworkGraph& net, const std::vector<LabeledImage>& data,
                                    int T, SnnMode mode, float conf_threshold, float nms_iou,
                                    int batch_size, SpikeStats* stats_accum) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GroundTruth>> truths;
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(data.size(), b + static_cast<std::size_t>(batch_size));
    SnnResult res = forward_snn(net, stack_images(data, idx, b, e), T, mode);
    if (stats_accum) {
      if (stats_accum->layers.empty()) {
        *stats_accum = res.stats;
      } else {
        for (std::size_t k = 0; k < res.stats.layers.size(); ++k) {
          stats_accum->layers[k].spikes += res.stats.layers[k].spikes;
          stats_accum->layers[k].neurons += res.stats.layers[k].neurons;
        }
      }
    }
    auto batch_dets = decode_detections(res.output, conf_threshold, nms_iou);
    for (std::size_t k = b; k < e; ++k) {
      dets.push_back(std::move(batch_dets[k - b]));
      truths.push_back(data[k].truths);
    }
  }
  return full_report(dets, truths, net.class_count);
}

TrainResult train(NetworkGraph net, const std::vector<LabeledImage>& train_data,
                  const std::vector<LabeledImage>& val_data, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (train_data.empty()) throw std::invalid_argument("train: empty training set");
  for (const LayerSpec& L : net.layers)
    if (L.kind == LayerKind::kActivation) {
      if (L.act.kind == ActivationKind::kIfNeuron)
        throw std::invalid_argument("train: network contains IF activations");
      if (L.act.kind != cfg.activation)
        throw std::invalid_argument("train: network activation kind does not match config");
    }

  Rng rng(cfg.seed ^ 0x7ea1c0ffull);
  std::vector<Velocity> vel = make_velocity(net);
  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    float lr = cfg.learning_rate;
    if (cfg.lr_schedule == "cosine")
      lr = cfg.learning_rate * 0.5f *
           (1.0f + std::cos(3.14159265358979f * epoch / std::max(1, cfg.epochs - 1)));

    rng.shuffle(order);
    double loss_sum = 0.0, box_sum = 0.0, obj_sum = 0.0, cls_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      Tensor batch = stack_images(train_data, order, b, e);
      std::vector<std::vector<GroundTruth>> truths;
      truths.reserve(e - b);
      for (std::size_t k = b; k < e; ++k) truths.push_back(train_data[order[k]].truths);

      ForwardTape tape;
      const DetectionOutput pred = forward_train(net, batch, cfg.bn_momentum, tape);
      YoloLossResult loss = yolo_loss(pred, truths, cfg.loss_weights);
      if (!std::isfinite(loss.total))
        throw TrainDivergedError("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(batches + 1));
      const std::vector<LayerGrads> grads = backward_train(net, tape, loss.grad_raw);
      apply_sgd(net, grads, vel, lr, cfg.momentum, cfg.lambda_min);

      loss_sum += loss.total;
      box_sum += loss.box;
      obj_sum += loss.objectness;
      cls_sum += loss.classification;
      ++batches;
    }

    EpochStats st;
    st.epoch = epoch + 1;
    st.total_loss = loss_sum / static_cast<double>(batches);
    st.box_loss = box_sum / static_cast<double>(batches);
    st.obj_loss = obj_sum / static_cast<double>(batches);
    st.cls_loss = cls_sum / static_cast<double>(batches);
    if (!val_data.empty()) {
      const MetricsReport r = evaluate_detector(net, val_data, cfg.eval_conf_threshold,
                                                cfg.eval_nms_iou, cfg.batch_size);
      st.map50 = r.map50;
      st.map5095 = r.map5095;
      st.f1_best = r.best_f1;
      st.conf_at_f1_best = r.best_f1_conf;
    }
    result.curve.push_back(st);
  }
  result.net = std::move(net);
  return result;
}

void write_curve_csv(const std::vector<EpochStats>& curve, const std::string& path) {
  CsvWriter w(path, {"epoch", "total_loss", "box_loss", "obj_loss", "cls_loss", "map50",
                     "map5095", "f1_best", "conf_at_f1_best"});
  for (const EpochStats& s : curve)
    w.row({std::to_string(s.epoch), csv_num(s.total_loss), csv_num(s.box_loss),
           csv_num(s.obj_loss), csv_num(s.cls_loss), csv_num(s.map50), csv_num(s.map5095),
           csv_num(s.f1_best), csv_num(s.conf_at_f1_best)});
}

} // namespace spikedet
