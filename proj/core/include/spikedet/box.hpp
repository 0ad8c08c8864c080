#pragma once

#include <algorithm>

namespace spikedet {

// Axis-aligned box, center + size, in pixel coordinates.
struct Box {
  float cx = 0.0f, cy = 0.0f, w = 0.0f, h = 0.0f;

  float x1() const { return cx - w / 2.0f; }
  float y1() const { return cy - h / 2.0f; }
  float x2() const { return cx + w / 2.0f; }
  float y2() const { return cy + h / 2.0f; }
  float area() const { return w * h; }

  static Box from_corners(float x1, float y1, float x2, float y2) {
    return Box{(x1 + x2) / 2.0f, (y1 + y2) / 2.0f, x2 - x1, y2 - y1};
  }
};

// Intersection over union in [0, 1]; 0 when the union is empty.
inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, static_cast<double>(std::min(a.x2(), b.x2())) -
                                      std::max(a.x1(), b.x1()));
  const double iy = std::max(0.0, static_cast<double>(std::min(a.y2(), b.y2())) -
                                      std::max(a.y1(), b.y1()));
  const double inter = ix * iy;
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

} // namespace spikedet
