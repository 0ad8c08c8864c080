#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikedet/metrics.hpp"
#include "spikedet/tensor.hpp"

namespace spikedet {

// One object per line: "class_id cx cy w h", whitespace separated,
// center/size normalized to [0, 1].
struct YoloLabel {
  int class_id = 0;
  float cx = 0.0f, cy = 0.0f, w = 0.0f, h = 0.0f;
};

struct YoloSample {
  std::string image_path;
  std::vector<YoloLabel> labels;
};

// In-memory training/eval sample with pixel-space truth boxes.
struct LabeledImage {
  Tensor image; // 3 x H x W, values in [0, 1]
  std::vector<GroundTruth> truths;
};

enum class Split : std::uint8_t { kTrain, kVal, kTest, kAll };

struct SplitSpec {
  Split split = Split::kAll;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t seed = 0;
};

// Loads a dataset root with images/ and labels/ subdirectories holding
// matching stems. Samples are enumerated in lexicographic order, then the
// requested split is cut out of a seeded shuffle (ratios above). A root with
// images/{train,val,test} subdirectories is used as a pre-split layout
// instead. Missing label files are treated as background with a warning;
// malformed label lines raise an error naming file and line.
std::vector<YoloSample> load_yolo_dataset(const std::string& root, const SplitSpec& spec);

// Binary PPM (P6, maxval 255) image I/O; tensors are 3 x H x W in [0, 1].
Tensor load_ppm(const std::string& path);
void save_ppm(const Tensor& image, const std::string& path);

// Converts a sample's normalized labels to pixel-space ground truth.
std::vector<GroundTruth> labels_to_truths(const YoloSample& sample, int img_w, int img_h);

// Loads the image and converts labels; the image defines the pixel frame.
LabeledImage load_labeled_image(const YoloSample& sample);

} // namespace spikedet
