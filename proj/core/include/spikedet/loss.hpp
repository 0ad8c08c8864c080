#pragma once

#include "spikedet/dataset.hpp"
#include "spikedet/network.hpp"

namespace spikedet {

struct LossWeights {
  float box = 0.05f;
  float objectness = 1.0f;
  float classification = 0.5f;
};

struct YoloLossResult {
  double total = 0.0;
  double box = 0.0;
  double objectness = 0.0;
  double classification = 0.0;
  int assigned = 0;  // anchor cells with a truth box assigned
  Tensor grad_raw;   // d total / d raw head logits (same shape as pred.raw)
};

// Composite detection loss: total = w_box * box + w_obj * obj + w_cls * cls.
// A truth box is assigned to the highest shape-IoU anchor of its center
// cell. Box term is mean (1 - IoU) over assignments, objectness is
// binary cross entropy on logits over every anchor cell (target 1 at
// assignments), classification is one-hot BCE over assignments.
YoloLossResult yolo_loss(const DetectionOutput& pred,
                         const std::vector<std::vector<GroundTruth>>& truths_per_image,
                         const LossWeights& weights);

} // namespace spikedet
