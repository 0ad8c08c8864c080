#pragma once

#include <algorithm>
#include <cmath>

namespace spikedet {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically stable binary cross entropy on a logit:
//   max(x, 0) - x*y + log(1 + exp(-|x|))
inline double bce_with_logits(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

// d/dx of bce_with_logits
inline double bce_with_logits_grad(double x, double y) { return sigmoid(x) - y; }

} // namespace spikedet
