#include "spikedet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "spikedet/mathutil.hpp"

namespace spikedet {

namespace {

constexpr float kSizeLogitClamp = 8.0f; // matches DetectionOutput::decode_box

// shape-only IoU of co-centered boxes, used for anchor assignment
double shape_iou(float w1, float h1, float w2, float h2) {
  const double inter = static_cast<double>(std::min(w1, w2)) * std::min(h1, h2);
  const double uni = static_cast<double>(w1) * h1 + static_cast<double>(w2) * h2 - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// IoU of the decoded box against the truth plus its partial derivatives
// w.r.t. the decoded center/size. Piecewise smooth; flat (zero grads) when
// the boxes do not overlap.
struct IouGrad {
  double value = 0.0;
  double d_cx = 0.0, d_cy = 0.0, d_w = 0.0, d_h = 0.0;
};

IouGrad iou_with_grad(const Box& p, const Box& t) {
  IouGrad r;
  const double px1 = p.x1(), px2 = p.x2(), py1 = p.y1(), py2 = p.y2();
  const double tx1 = t.x1(), tx2 = t.x2(), ty1 = t.y1(), ty2 = t.y2();
  const double iw = std::min(px2, tx2) - std::max(px1, tx1);
  const double ih = std::min(py2, ty2) - std::max(py1, ty1);
  if (iw <= 0.0 || ih <= 0.0) return r;
  const double inter = iw * ih;
  const double pa = static_cast<double>(p.w) * p.h;
  const double ta = static_cast<double>(t.w) * t.h;
  const double uni = pa + ta - inter;
  if (uni <= 0.0) return r;
  r.value = inter / uni;

  // d iw / d (cx, w): right edge active when px2 < tx2, left when px1 > tx1
  const double diw_dcx = (px2 < tx2 ? 1.0 : 0.0) - (px1 > tx1 ? 1.0 : 0.0);
  const double diw_dw = (px2 < tx2 ? 0.5 : 0.0) + (px1 > tx1 ? 0.5 : 0.0);
  const double dih_dcy = (py2 < ty2 ? 1.0 : 0.0) - (py1 > ty1 ? 1.0 : 0.0);
  const double dih_dh = (py2 < ty2 ? 0.5 : 0.0) + (py1 > ty1 ? 0.5 : 0.0);

  const double dI_dcx = ih * diw_dcx, dI_dcy = iw * dih_dcy;
  const double dI_dw = ih * diw_dw, dI_dh = iw * dih_dh;
  // dU/dv = d(pa)/dv - dI/dv
  const double dU_dcx = -dI_dcx, dU_dcy = -dI_dcy;
  const double dU_dw = p.h - dI_dw, dU_dh = p.w - dI_dh;

  const double u2 = uni * uni;
  r.d_cx = (dI_dcx * uni - inter * dU_dcx) / u2;
  r.d_cy = (dI_dcy * uni - inter * dU_dcy) / u2;
  r.d_w = (dI_dw * uni - inter * dU_dw) / u2;
  r.d_h = (dI_dh * uni - inter * dU_dh) / u2;
  return r;
}

} // namespace

YoloLossResult yolo_loss(const DetectionOutput& pred,
                         const std::vector<std::vector<GroundTruth>>& truths_per_image,
                         const LossWeights& weights) {
  if (!(weights.box >= 0.0f && weights.objectness >= 0.0f && weights.classification >= 0.0f))
    throw std::invalid_argument("yolo_loss: loss weights must be non-negative");
  const int N = pred.batch(), A = pred.head.anchor_count(), C = pred.head.class_count;
  const int GH = pred.grid_h(), GW = pred.grid_w();
  if (truths_per_image.size() != static_cast<std::size_t>(N))
    throw std::invalid_argument("yolo_loss: truth image count " +
                                std::to_string(truths_per_image.size()) + " != batch " +
                                std::to_string(N));
  const int fields = 5 + C;
  const float stride = static_cast<float>(pred.head.stride);

  YoloLossResult res;
  res.grad_raw = Tensor(pred.raw.shape);

  // anchor assignment: (n, a, gy, gx) -> truth index or -1
  struct Assign {
    int truth = -1;
  };
  std::vector<Assign> assign(static_cast<std::size_t>(N) * A * GH * GW);
  auto aidx = [&](int n, int a, int gy, int gx) {
    return ((static_cast<std::size_t>(n) * A + a) * GH + gy) * GW + gx;
  };
  int n_assigned = 0;
  for (int n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < truths_per_image[static_cast<std::size_t>(n)].size(); ++t) {
      const GroundTruth& g = truths_per_image[static_cast<std::size_t>(n)][t];
      const int gx = std::clamp(static_cast<int>(g.box.cx / stride), 0, GW - 1);
      const int gy = std::clamp(static_cast<int>(g.box.cy / stride), 0, GH - 1);
      int best_a = 0;
      double best = -1.0;
      for (int a = 0; a < A; ++a) {
        const Anchor& an = pred.head.anchors[static_cast<std::size_t>(a)];
        const double v = shape_iou(g.box.w, g.box.h, an.w, an.h);
        if (v > best) {
          best = v;
          best_a = a;
        }
      }
      Assign& slot = assign[aidx(n, best_a, gy, gx)];
      if (slot.truth < 0) { // first truth wins a contested anchor cell
        slot.truth = static_cast<int>(t);
        ++n_assigned;
      }
    }
  }
  res.assigned = n_assigned;

  const double obj_norm = static_cast<double>(N) * A * GH * GW;
  const double pos_norm = std::max(1, n_assigned);
  double box_sum = 0.0, obj_sum = 0.0, cls_sum = 0.0;

  for (int n = 0; n < N; ++n)
    for (int a = 0; a < A; ++a)
      for (int gy = 0; gy < GH; ++gy)
        for (int gx = 0; gx < GW; ++gx) {
          const int truth_idx = assign[aidx(n, a, gy, gx)].truth;
          const bool positive = truth_idx >= 0;
          const int ch0 = a * fields;
          const std::size_t obj_i = pred.raw.idx4(n, ch0 + 4, gy, gx);
          const double obj_logit = pred.raw[obj_i];
          obj_sum += bce_with_logits(obj_logit, positive ? 1.0 : 0.0);
          res.grad_raw[obj_i] += static_cast<float>(
              weights.objectness * bce_with_logits_grad(obj_logit, positive ? 1.0 : 0.0) /
              obj_norm);
          if (!positive) continue;

          const GroundTruth& g =
              truths_per_image[static_cast<std::size_t>(n)][static_cast<std::size_t>(truth_idx)];

          // classification: one-hot BCE over all classes
          for (int c = 0; c < C; ++c) {
            const std::size_t ci = pred.raw.idx4(n, ch0 + 5 + c, gy, gx);
            const double y = c == g.class_id ? 1.0 : 0.0;
            cls_sum += bce_with_logits(pred.raw[ci], y);
            res.grad_raw[ci] += static_cast<float>(
                weights.classification * bce_with_logits_grad(pred.raw[ci], y) / pos_norm);
          }

          // box: 1 - IoU of the decoded box
          const std::size_t txi = pred.raw.idx4(n, ch0 + 0, gy, gx);
          const std::size_t tyi = pred.raw.idx4(n, ch0 + 1, gy, gx);
          const std::size_t twi = pred.raw.idx4(n, ch0 + 2, gy, gx);
          const std::size_t thi = pred.raw.idx4(n, ch0 + 3, gy, gx);
          const Anchor& an = pred.head.anchors[static_cast<std::size_t>(a)];
          const double sx = sigmoid(pred.raw[txi]), sy = sigmoid(pred.raw[tyi]);
          const float tw = std::clamp(pred.raw[twi], -kSizeLogitClamp, kSizeLogitClamp);
          const float th = std::clamp(pred.raw[thi], -kSizeLogitClamp, kSizeLogitClamp);
          Box p;
          p.cx = static_cast<float>((sx + gx) * stride);
          p.cy = static_cast<float>((sy + gy) * stride);
          p.w = an.w * std::exp(tw);
          p.h = an.h * std::exp(th);
          const IouGrad ig = iou_with_grad(p, g.box);
          box_sum += 1.0 - ig.value;

          const double scale = weights.box / pos_norm;
          // d box / d logit: chain through the decode transforms
          res.grad_raw[txi] += static_cast<float>(-scale * ig.d_cx * stride * sx * (1.0 - sx));
          res.grad_raw[tyi] += static_cast<float>(-scale * ig.d_cy * stride * sy * (1.0 - sy));
          if (std::abs(pred.raw[twi]) < kSizeLogitClamp)
            res.grad_raw[twi] += static_cast<float>(-scale * ig.d_w * p.w);
          if (std::abs(pred.raw[thi]) < kSizeLogitClamp)
            res.grad_raw[thi] += static_cast<float>(-scale * ig.d_h * p.h);
        }

  res.box = box_sum / pos_norm;
  res.objectness = obj_sum / obj_norm;
  res.classification = cls_sum / pos_norm;
  res.total = weights.box * res.box + weights.objectness * res.objectness +
              weights.classification * res.classification;
  return res;
}

} // namespace spikedet
