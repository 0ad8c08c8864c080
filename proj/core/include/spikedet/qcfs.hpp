#pragma once

#include "spikedet/tensor.hpp"

namespace spikedet {

// Surrogate-gradient band convention. The band's lower edge is always
// -lambda/(2L); kCentered puts the upper edge at lambda - lambda/(2L)
// (symmetric around the quantization cells, the default), kWide at
// lambda + lambda/(2L).
enum class SteBand { kCentered, kWide };

// Parameters of the quantization clip-floor-shift activation
//   h(z) = lambda * clip(floor(z * L / lambda + phi) / L, 0, 1).
// lambda is the trainable per-layer threshold, L the number of quantization
// steps, phi the shift (default 1/2).
struct QCFSParams {
  float lambda = 1.0f;
  int L = 4;
  float phi = 0.5f;
  SteBand band = SteBand::kCentered;

  void validate() const {
    if (!(lambda > 0.0f)) throw std::invalid_argument("QCFSParams: lambda must be positive");
    if (L < 1) throw std::invalid_argument("QCFSParams: L must be >= 1");
    if (!(phi >= 0.0f && phi < 1.0f))
      throw std::invalid_argument("QCFSParams: phi must be in [0, 1)");
  }

  double band_lower() const { return -static_cast<double>(lambda) / (2.0 * L); }
  double band_upper() const {
    const double half_step = static_cast<double>(lambda) / (2.0 * L);
    return band == SteBand::kCentered ? lambda - half_step : lambda + half_step;
  }
};

// Elementwise h(z). Output values lie on the grid {0, lambda/L, ..., lambda}.
Tensor qcfs_forward(const Tensor& z, const QCFSParams& p);
double qcfs_forward_scalar(double z, const QCFSParams& p);

// Surrogate dh/dz: 1 strictly inside the band, 0 elsewhere.
Tensor qcfs_grad_z(const Tensor& z, const QCFSParams& p);

// Surrogate dh/dlambda: (h(z) - z)/lambda inside the band, 0 below it,
// 1 at or above the upper edge.
Tensor qcfs_grad_lambda(const Tensor& z, const QCFSParams& p);

struct QCFSBackward {
  Tensor grad_z;
  float grad_lambda = 0.0f; // lambda is shared per layer, so this is a scalar sum
};

QCFSBackward qcfs_layer_backward(const Tensor& upstream_grad, const Tensor& z,
                                 const QCFSParams& p);

} // namespace spikedet
