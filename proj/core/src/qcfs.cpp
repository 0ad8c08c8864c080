#include "spikedet/qcfs.hpp"

#include <algorithm>
#include <cmath>

#include "spikedet/parallel.hpp"

namespace spikedet {

double qcfs_forward_scalar(double z, const QCFSParams& p) {
  const double q = std::floor(z * p.L / p.lambda + p.phi) / p.L;
  return p.lambda * std::clamp(q, 0.0, 1.0);
}

Tensor qcfs_forward(const Tensor& z, const QCFSParams& p) {
  p.validate();
  Tensor out(z.shape);
  parallel_for(z.numel(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      out[i] = static_cast<float>(qcfs_forward_scalar(z[i], p));
  });
  return out;
}

Tensor qcfs_grad_z(const Tensor& z, const QCFSParams& p) {
  p.validate();
  const double lo = p.band_lower(), hi = p.band_upper();
  Tensor out(z.shape);
  parallel_for(z.numel(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double v = z[i];
      out[i] = (v > lo && v < hi) ? 1.0f : 0.0f;
    }
  });
  return out;
}

Tensor qcfs_grad_lambda(const Tensor& z, const QCFSParams& p) {
  p.validate();
  const double lo = p.band_lower(), hi = p.band_upper();
  Tensor out(z.shape);
  parallel_for(z.numel(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double v = z[i];
      if (v >= hi)
        out[i] = 1.0f;
      else if (v > lo)
        out[i] = static_cast<float>((qcfs_forward_scalar(v, p) - v) / p.lambda);
      else
        out[i] = 0.0f;
    }
  });
  return out;
}

QCFSBackward qcfs_layer_backward(const Tensor& upstream_grad, const Tensor& z,
                                 const QCFSParams& p) {
  check_same_shape(upstream_grad, z, "qcfs_layer_backward");
  p.validate();
  QCFSBackward bw;
  bw.grad_z = Tensor(z.shape);
  const double lo = p.band_lower(), hi = p.band_upper();
  double lambda_sum = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const double v = z[i];
    bw.grad_z[i] = (v > lo && v < hi) ? upstream_grad[i] : 0.0f;
    double gl;
    if (v >= hi)
      gl = 1.0;
    else if (v > lo)
      gl = (qcfs_forward_scalar(v, p) - v) / p.lambda;
    else
      gl = 0.0;
    lambda_sum += static_cast<double>(upstream_grad[i]) * gl;
  }
  bw.grad_lambda = static_cast<float>(lambda_sum);
  return bw;
}

} // namespace spikedet
