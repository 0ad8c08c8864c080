#pragma once

#include "spikedet/tensor.hpp"

namespace spikedet {

// 2-d convolution parameters. Weights are (out_channels, in_channels, k, k),
// bias has out_channels entries.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;
  int stride = 1;
  int padding = 0;
  Tensor weights;
  Tensor bias;

  void validate() const;
};

// Per-channel affine normalization parameters (inference form).
struct BatchNormSpec {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  float epsilon = 1e-5f;

  int channels() const { return gamma.ndim() ? gamma.dim(0) : 0; }
  void validate() const;
};

// ---- forward ops (reference semantics: direct computation, zero padding) ----

// Input NCHW. Output spatial dims follow (H + 2p - k)/s + 1.
Tensor conv2d(const Tensor& input, const ConvSpec& spec);

// y = gamma * (x - running_mean) / sqrt(running_var + eps) + beta, per channel.
Tensor batch_norm_infer(const Tensor& input, const BatchNormSpec& spec);

Tensor avg_pool2d(const Tensor& input, int k, int s);
Tensor max_pool2d(const Tensor& input, int k, int s);

// x >= 0 ? x : slope * x. slope must be in [0, 1).
Tensor leaky_relu(const Tensor& input, float slope);

// Nearest-neighbor upsampling by an integer factor.
Tensor upsample_nearest(const Tensor& input, int factor);

// Channel-wise concatenation; inputs must agree on N, H, W.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// ---- training-mode batch norm ----

struct BatchNormCache {
  Tensor x_hat;            // normalized input, same shape as x
  std::vector<double> mean;
  std::vector<double> inv_std;
};

// Normalizes with per-batch statistics over (N, H, W) and updates the
// running stats in `spec` with the given momentum.
Tensor batch_norm_train(const Tensor& input, BatchNormSpec& spec, float momentum,
                        BatchNormCache& cache);

// ---- backward kernels (gradients w.r.t. inputs and parameters) ----

Tensor conv2d_backward_input(const Tensor& grad_out, const ConvSpec& spec,
                             int in_h, int in_w);
void conv2d_backward_params(const Tensor& grad_out, const Tensor& input, const ConvSpec& spec,
                            Tensor& grad_weights, Tensor& grad_bias);

Tensor batch_norm_backward(const Tensor& grad_out, const BatchNormSpec& spec,
                           const BatchNormCache& cache, Tensor& grad_gamma, Tensor& grad_beta);

Tensor avg_pool2d_backward(const Tensor& grad_out, int k, int s, int in_h, int in_w);
// max pooling routes gradient to the first maximal element of each window
// (same scan order as the forward pass).
Tensor max_pool2d_backward(const Tensor& grad_out, const Tensor& input, int k, int s);

Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& input, float slope);

Tensor upsample_nearest_backward(const Tensor& grad_out, int factor);

} // namespace spikedet
