#include "spikedet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spikedet/rng.hpp"

namespace spikedet {

namespace fs = std::filesystem;

namespace {

std::vector<YoloLabel> read_label_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open label file '" + path + "'");
  std::vector<YoloLabel> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue; // blank line
    YoloLabel l;
    float cx, cy, w, h;
    try {
      l.class_id = std::stoi(first);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed class id '" +
                               first + "'");
    }
    if (!(ss >> cx >> cy >> w >> h) || l.class_id < 0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed label line (want: class cx cy w h)");
    std::string extra;
    if (ss >> extra)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": trailing tokens");
    // clamp out-of-range boxes to the unit square
    float x1 = cx - w / 2, x2 = cx + w / 2, y1 = cy - h / 2, y2 = cy + h / 2;
    if (x1 < 0.0f || y1 < 0.0f || x2 > 1.0f || y2 > 1.0f) {
      std::cerr << "warning: " << path << ":" << line_no << ": box outside [0,1], clamped\n";
      x1 = std::clamp(x1, 0.0f, 1.0f);
      x2 = std::clamp(x2, 0.0f, 1.0f);
      y1 = std::clamp(y1, 0.0f, 1.0f);
      y2 = std::clamp(y2, 0.0f, 1.0f);
    }
    l.cx = (x1 + x2) / 2;
    l.cy = (y1 + y2) / 2;
    l.w = x2 - x1;
    l.h = y2 - y1;
    labels.push_back(l);
  }
  return labels;
}

std::vector<YoloSample> collect_dir(const fs::path& images, const fs::path& labels) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<YoloSample> samples;
  for (const fs::path& img : files) {
    YoloSample s;
    s.image_path = img.string();
    const fs::path label = labels / (img.stem().string() + ".txt");
    if (fs::exists(label)) {
      s.labels = read_label_file(label.string());
    } else {
      std::cerr << "warning: no label file for '" << img.string()
                << "', treating as background\n";
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

} // namespace

std::vector<YoloSample> load_yolo_dataset(const std::string& root, const SplitSpec& spec) {
  const fs::path images = fs::path(root) / "images";
  const fs::path labels = fs::path(root) / "labels";
  if (!fs::is_directory(images))
    throw std::runtime_error("dataset root '" + root + "' has no images/ directory");

  const char* split_names[] = {"train", "val", "test"};
  if (fs::is_directory(images / "train")) {
    // pre-split layout: images/{train,val,test}
    if (spec.split == Split::kAll) {
      std::vector<YoloSample> all;
      for (const char* name : split_names) {
        if (!fs::is_directory(images / name)) continue;
        auto part = collect_dir(images / name, labels / name);
        all.insert(all.end(), part.begin(), part.end());
      }
      return all;
    }
    const char* name = split_names[static_cast<int>(spec.split)];
    if (!fs::is_directory(images / name))
      throw std::runtime_error("dataset root '" + root + "' has no images/" + name);
    return collect_dir(images / name, labels / name);
  }

  std::vector<YoloSample> all = collect_dir(images, labels);
  if (spec.split == Split::kAll) return all;

  const double total = spec.train_ratio + spec.val_ratio + spec.test_ratio;
  if (!(total > 0.0)) throw std::invalid_argument("load_yolo_dataset: ratios sum to zero");
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(spec.seed ^ 0xda7a5e7ull);
  rng.shuffle(idx);
  const std::size_t n = all.size();
  const std::size_t n_train = static_cast<std::size_t>(std::lround(n * spec.train_ratio / total));
  const std::size_t n_val = static_cast<std::size_t>(std::lround(n * spec.val_ratio / total));
  std::size_t begin = 0, end = n;
  switch (spec.split) {
    case Split::kTrain: begin = 0; end = n_train; break;
    case Split::kVal: begin = n_train; end = std::min(n, n_train + n_val); break;
    case Split::kTest: begin = std::min(n, n_train + n_val); end = n; break;
    case Split::kAll: break;
  }
  std::vector<std::size_t> take(idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                idx.begin() + static_cast<std::ptrdiff_t>(end));
  std::sort(take.begin(), take.end()); // deterministic (lexicographic) order within the split
  std::vector<YoloSample> out;
  out.reserve(take.size());
  for (std::size_t i : take) out.push_back(all[i]);
  return out;
}

Tensor load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_ppm: cannot open '" + path + "'");
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("load_ppm: '" + path + "' is not binary PPM (P6)");
  auto next_int = [&]() {
    // skips whitespace and '#' comments
    for (;;) {
      int c = f.peek();
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
      } else if (std::isspace(c)) {
        f.get();
      } else {
        break;
      }
    }
    int v;
    f >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("load_ppm: unsupported header in '" + path + "'");
  f.get(); // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("load_ppm: truncated pixel data in '" + path + "'");
  Tensor img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.data[(static_cast<std::size_t>(c) * h + y) * w + x] =
            static_cast<float>(bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return img;
}

void save_ppm(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("save_ppm: expected 3 x H x W tensor, got " + image.shape_str());
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_ppm: cannot open '" + path + "'");
  f << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = image.data[(static_cast<std::size_t>(c) * h + y) * w + x];
        bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::clamp(std::lround(v * 255.0f), 0L, 255L));
      }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<GroundTruth> labels_to_truths(const YoloSample& sample, int img_w, int img_h) {
  std::vector<GroundTruth> out;
  out.reserve(sample.labels.size());
  for (const YoloLabel& l : sample.labels) {
    GroundTruth g;
    g.class_id = l.class_id;
    g.box = Box{l.cx * static_cast<float>(img_w), l.cy * static_cast<float>(img_h),
                l.w * static_cast<float>(img_w), l.h * static_cast<float>(img_h)};
    out.push_back(g);
  }
  return out;
}

LabeledImage load_labeled_image(const YoloSample& sample) {
  LabeledImage li;
  li.image = load_ppm(sample.image_path);
  li.truths = labels_to_truths(sample, li.image.dim(2), li.image.dim(1));
  return li;
}

} // namespace spikedet
