#include "spikedet/synthetic.hpp"

#include <cmath>

#include "spikedet/rng.hpp"

namespace spikedet {

namespace {

constexpr int kSize = kSyntheticImageSize;

struct Rgb {
  float r, g, b;
};

void draw_shape(Tensor& img, int class_id, const Box& box, const Rgb& color) {
  const int x1 = static_cast<int>(std::floor(box.x1())), x2 = static_cast<int>(std::ceil(box.x2()));
  const int y1 = static_cast<int>(std::floor(box.y1())), y2 = static_cast<int>(std::ceil(box.y2()));
  const float rx = box.w / 2.0f, ry = box.h / 2.0f;
  for (int y = std::max(0, y1); y < std::min(kSize, y2); ++y) {
    for (int x = std::max(0, x1); x < std::min(kSize, x2); ++x) {
      const float px = static_cast<float>(x) + 0.5f, py = static_cast<float>(y) + 0.5f;
      bool inside = false;
      switch (class_id) {
        case 0: { // disc
          const float dx = (px - box.cx) / rx, dy = (py - box.cy) / ry;
          inside = dx * dx + dy * dy <= 1.0f;
          break;
        }
        case 1: // rectangle
          inside = px >= box.x1() && px <= box.x2() && py >= box.y1() && py <= box.y2();
          break;
        case 2: { // triangle, apex up
          const float t = (py - box.y1()) / box.h; // 0 at apex row, 1 at base
          if (t >= 0.0f && t <= 1.0f) {
            const float half = rx * t;
            inside = px >= box.cx - half && px <= box.cx + half;
          }
          break;
        }
      }
      if (inside) {
        img.data[(0 * kSize + y) * kSize + x] = color.r;
        img.data[(1 * kSize + y) * kSize + x] = color.g;
        img.data[(2 * kSize + y) * kSize + x] = color.b;
      }
    }
  }
}

} // namespace

const char* synthetic_class_name(int class_id) {
  switch (class_id) {
    case 0: return "disc";
    case 1: return "rectangle";
    case 2: return "triangle";
  }
  return "?";
}

std::vector<SyntheticScene> generate_synthetic_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_synthetic_dataset: n must be >= 1");
  Rng rng(seed ^ 0x5ce9e5ull);

  // balanced class assignment: floor(n/3) each plus remainder, shuffled
  std::vector<int> classes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) classes[static_cast<std::size_t>(i)] = i % kSyntheticClassCount;
  rng.shuffle(classes);

  std::vector<SyntheticScene> scenes;
  scenes.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SyntheticScene s;
    s.image = Tensor({3, kSize, kSize});

    // dim noisy background
    const float base_r = static_cast<float>(rng.uniform(0.08, 0.30));
    const float base_g = static_cast<float>(rng.uniform(0.08, 0.30));
    const float base_b = static_cast<float>(rng.uniform(0.08, 0.30));
    const float base[3] = {base_r, base_g, base_b};
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < kSize * kSize; ++p)
        s.image.data[static_cast<std::size_t>(c) * kSize * kSize + p] =
            std::clamp(base[c] + static_cast<float>(rng.uniform(-0.06, 0.06)), 0.0f, 1.0f);

    // one bright shape, fully inside the frame
    const int class_id = classes[static_cast<std::size_t>(i)];
    const float w = static_cast<float>(rng.uniform(14.0, 34.0));
    const float h = static_cast<float>(rng.uniform(14.0, 34.0));
    const float cx = static_cast<float>(rng.uniform(w / 2.0 + 2.0, kSize - w / 2.0 - 2.0));
    const float cy = static_cast<float>(rng.uniform(h / 2.0 + 2.0, kSize - h / 2.0 - 2.0));
    const Box box{cx, cy, w, h};

    Rgb color;
    const int channel = rng.uniform_int(0, 2); // dominant channel keeps colors saturated
    float vals[3];
    for (int c = 0; c < 3; ++c)
      vals[c] = static_cast<float>(c == channel ? rng.uniform(0.75, 1.0) : rng.uniform(0.0, 0.45));
    color = Rgb{vals[0], vals[1], vals[2]};

    draw_shape(s.image, class_id, box, color);
    s.truths.push_back(GroundTruth{class_id, box});
    scenes.push_back(std::move(s));
  }
  return scenes;
}

} // namespace spikedet
