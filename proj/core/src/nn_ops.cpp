#include "spikedet/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "spikedet/parallel.hpp"

namespace spikedet {

namespace {

int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

int out_extent(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

void require_4d(const Tensor& t, const char* where) {
  if (t.ndim() != 4)
    throw std::invalid_argument(std::string(where) + ": expected 4-d NCHW tensor, got " +
                                t.shape_str());
}

} // namespace

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel_size <= 0)
    throw std::invalid_argument("ConvSpec: channels and kernel_size must be positive");
  if (stride <= 0 || padding < 0)
    throw std::invalid_argument("ConvSpec: stride must be positive, padding non-negative");
  const std::vector<int> want = {out_channels, in_channels, kernel_size, kernel_size};
  if (weights.shape != want)
    throw std::invalid_argument("ConvSpec: weights shape " + weights.shape_str() +
                                " does not match (out,in,k,k)");
  if (bias.numel() != static_cast<std::size_t>(out_channels))
    throw std::invalid_argument("ConvSpec: bias length " + std::to_string(bias.numel()) +
                                " != out_channels " + std::to_string(out_channels));
}

void BatchNormSpec::validate() const {
  const std::size_t c = gamma.numel();
  if (c == 0 || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
    throw std::invalid_argument("BatchNormSpec: per-channel vectors must have equal length");
  if (!(epsilon > 0.0f))
    throw std::invalid_argument("BatchNormSpec: epsilon must be positive");
  for (float v : running_var.data)
    if (v < 0.0f) throw std::invalid_argument("BatchNormSpec: negative running variance");
  if (!gamma.all_finite() || !beta.all_finite() || !running_mean.all_finite() ||
      !running_var.all_finite())
    throw std::invalid_argument("BatchNormSpec: non-finite parameter");
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec) {
  require_4d(input, "conv2d");
  spec.validate();
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (C != spec.in_channels)
    throw std::invalid_argument("conv2d: input shape " + input.shape_str() +
                                " has channel count " + std::to_string(C) +
                                ", weights shape " + spec.weights.shape_str() + " expect " +
                                std::to_string(spec.in_channels));
  const int k = spec.kernel_size, s = spec.stride, p = spec.padding;
  if (H + 2 * p < k || W + 2 * p < k)
    throw std::invalid_argument("conv2d: spatial dims + padding smaller than kernel");
  const int OH = out_extent(H, k, s, p), OW = out_extent(W, k, s, p);
  const int K = spec.out_channels;
  Tensor out({N, K, OH, OW});

  const float* in = input.data.data();
  const float* wts = spec.weights.data.data();
  float* o = out.data.data();

  parallel_for(static_cast<std::size_t>(N) * K, [&](std::size_t b, std::size_t e) {
    std::vector<float> acc(static_cast<std::size_t>(OH) * OW);
    for (std::size_t u = b; u < e; ++u) {
      const int n = static_cast<int>(u) / K;
      const int co = static_cast<int>(u) % K;
      std::fill(acc.begin(), acc.end(), spec.bias[static_cast<std::size_t>(co)]);
      for (int ci = 0; ci < C; ++ci) {
        const float* inc = in + (static_cast<std::size_t>(n) * C + ci) * H * W;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const float w = wts[((static_cast<std::size_t>(co) * C + ci) * k + ky) * k + kx];
            if (w == 0.0f) continue;
            const int x0 = std::max(0, ceil_div(p - kx, s));
            const int x1 = std::min(OW, ceil_div(W + p - kx, s));
            if (x0 >= x1) continue;
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * s + ky - p;
              if (iy < 0 || iy >= H) continue;
              const float* irow = inc + static_cast<std::size_t>(iy) * W + (x0 * s + kx - p);
              float* arow = acc.data() + static_cast<std::size_t>(oy) * OW;
              if (s == 1) {
                for (int ox = x0; ox < x1; ++ox) arow[ox] += w * irow[ox - x0];
              } else {
                for (int ox = x0; ox < x1; ++ox) arow[ox] += w * irow[(ox - x0) * s];
              }
            }
          }
        }
      }
      std::memcpy(o + u * acc.size(), acc.data(), acc.size() * sizeof(float));
    }
  });
  return out;
}

Tensor batch_norm_infer(const Tensor& input, const BatchNormSpec& spec) {
  spec.validate();
  if (input.ndim() < 2)
    throw std::invalid_argument("batch_norm_infer: need at least (N, C) dims, got " +
                                input.shape_str());
  const int C = input.dim(1);
  if (C != spec.channels())
    throw std::invalid_argument("batch_norm_infer: input " + input.shape_str() + " has " +
                                std::to_string(C) + " channels, spec has " +
                                std::to_string(spec.channels()));
  const int N = input.dim(0);
  std::size_t plane = 1;
  for (int i = 2; i < input.ndim(); ++i) plane *= static_cast<std::size_t>(input.dim(i));

  std::vector<float> scale(C), shift(C);
  for (int c = 0; c < C; ++c) {
    const double sc = spec.gamma[c] / std::sqrt(static_cast<double>(spec.running_var[c]) +
                                                static_cast<double>(spec.epsilon));
    scale[c] = static_cast<float>(sc);
    shift[c] = static_cast<float>(spec.beta[c] - spec.running_mean[c] * sc);
  }

  Tensor out(input.shape);
  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const int c = static_cast<int>(u % static_cast<std::size_t>(C));
      const float* x = input.data.data() + u * plane;
      float* y = out.data.data() + u * plane;
      for (std::size_t i = 0; i < plane; ++i) y[i] = x[i] * scale[c] + shift[c];
    }
  });
  return out;
}

namespace {

template <bool kMax>
Tensor pool2d(const Tensor& input, int k, int s) {
  require_4d(input, "pool2d");
  if (k <= 0 || s <= 0) throw std::invalid_argument("pool2d: k and s must be positive");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H < k || W < k)
    throw std::invalid_argument("pool2d: spatial dims " + input.shape_str() +
                                " smaller than window " + std::to_string(k));
  const int OH = (H - k) / s + 1, OW = (W - k) / s + 1;
  Tensor out({N, C, OH, OW});
  const float inv = 1.0f / static_cast<float>(k * k);

  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const float* x = input.data.data() + u * static_cast<std::size_t>(H) * W;
      float* y = out.data.data() + u * static_cast<std::size_t>(OH) * OW;
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox) {
          const int iy0 = oy * s, ix0 = ox * s;
          if constexpr (kMax) {
            float m = x[static_cast<std::size_t>(iy0) * W + ix0];
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                m = std::max(m, x[static_cast<std::size_t>(iy0 + dy) * W + ix0 + dx]);
            y[static_cast<std::size_t>(oy) * OW + ox] = m;
          } else {
            float sum = 0.0f;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                sum += x[static_cast<std::size_t>(iy0 + dy) * W + ix0 + dx];
            y[static_cast<std::size_t>(oy) * OW + ox] = sum * inv;
          }
        }
      }
    }
  });
  return out;
}

} // namespace

Tensor avg_pool2d(const Tensor& input, int k, int s) { return pool2d<false>(input, k, s); }
Tensor max_pool2d(const Tensor& input, int k, int s) { return pool2d<true>(input, k, s); }

Tensor leaky_relu(const Tensor& input, float slope) {
  if (!(slope >= 0.0f && slope < 1.0f))
    throw std::invalid_argument("leaky_relu: slope must be in [0, 1)");
  Tensor out(input.shape);
  parallel_for(input.numel(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const float x = input[i];
      out[i] = x >= 0.0f ? x : slope * x;
    }
  });
  return out;
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  require_4d(input, "upsample_nearest");
  if (factor <= 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  Tensor out({N, C, H * factor, W * factor});
  const int OW = W * factor;
  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const float* x = input.data.data() + u * static_cast<std::size_t>(H) * W;
      float* y = out.data.data() + u * static_cast<std::size_t>(H) * factor * OW;
      for (int iy = 0; iy < H; ++iy)
        for (int fy = 0; fy < factor; ++fy) {
          float* row = y + (static_cast<std::size_t>(iy) * factor + fy) * OW;
          for (int ix = 0; ix < W; ++ix)
            for (int fx = 0; fx < factor; ++fx) row[ix * factor + fx] = x[iy * W + ix];
        }
    }
  });
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_4d(a, "concat_channels");
  require_4d(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes " + a.shape_str() + " vs " +
                                b.shape_str());
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  Tensor out({N, Ca + Cb, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    std::memcpy(out.data.data() + out.idx4(n, 0, 0, 0), a.data.data() + a.idx4(n, 0, 0, 0),
                Ca * plane * sizeof(float));
    std::memcpy(out.data.data() + out.idx4(n, Ca, 0, 0), b.data.data() + b.idx4(n, 0, 0, 0),
                Cb * plane * sizeof(float));
  }
  return out;
}

Tensor batch_norm_train(const Tensor& input, BatchNormSpec& spec, float momentum,
                        BatchNormCache& cache) {
  require_4d(input, "batch_norm_train");
  spec.validate();
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (C != spec.channels())
    throw std::invalid_argument("batch_norm_train: channel mismatch");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const std::size_t m = static_cast<std::size_t>(N) * plane;

  cache.mean.assign(C, 0.0);
  cache.inv_std.assign(C, 0.0);
  cache.x_hat = Tensor(input.shape);
  Tensor out(input.shape);

  parallel_for(static_cast<std::size_t>(C), [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* x = input.data.data() + (static_cast<std::size_t>(n) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum += x[i];
          sq += static_cast<double>(x[i]) * x[i];
        }
      }
      const double mu = sum / static_cast<double>(m);
      const double var = std::max(0.0, sq / static_cast<double>(m) - mu * mu);
      const double istd = 1.0 / std::sqrt(var + spec.epsilon);
      cache.mean[c] = mu;
      cache.inv_std[c] = istd;
      const float g = spec.gamma[c], bta = spec.beta[c];
      for (int n = 0; n < N; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
        const float* x = input.data.data() + off;
        float* xh = cache.x_hat.data.data() + off;
        float* y = out.data.data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          const float v = static_cast<float>((x[i] - mu) * istd);
          xh[i] = v;
          y[i] = g * v + bta;
        }
      }
      spec.running_mean[c] =
          static_cast<float>((1.0 - momentum) * spec.running_mean[c] + momentum * mu);
      spec.running_var[c] =
          static_cast<float>((1.0 - momentum) * spec.running_var[c] + momentum * var);
    }
  });
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const ConvSpec& spec, int in_h, int in_w) {
  require_4d(grad_out, "conv2d_backward_input");
  const int N = grad_out.dim(0), K = grad_out.dim(1), OH = grad_out.dim(2), OW = grad_out.dim(3);
  if (K != spec.out_channels)
    throw std::invalid_argument("conv2d_backward_input: channel mismatch");
  const int C = spec.in_channels, k = spec.kernel_size, s = spec.stride, p = spec.padding;
  Tensor gin({N, C, in_h, in_w});
  const float* go = grad_out.data.data();
  const float* wts = spec.weights.data.data();

  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const int n = static_cast<int>(u) / C;
      const int ci = static_cast<int>(u) % C;
      float* g = gin.data.data() + u * static_cast<std::size_t>(in_h) * in_w;
      for (int co = 0; co < K; ++co) {
        const float* goc = go + (static_cast<std::size_t>(n) * K + co) * OH * OW;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const float w = wts[((static_cast<std::size_t>(co) * C + ci) * k + ky) * k + kx];
            if (w == 0.0f) continue;
            const int x0 = std::max(0, ceil_div(p - kx, s));
            const int x1 = std::min(OW, ceil_div(in_w + p - kx, s));
            if (x0 >= x1) continue;
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * s + ky - p;
              if (iy < 0 || iy >= in_h) continue;
              const float* grow = goc + static_cast<std::size_t>(oy) * OW;
              float* irow = g + static_cast<std::size_t>(iy) * in_w + (x0 * s + kx - p);
              if (s == 1) {
                for (int ox = x0; ox < x1; ++ox) irow[ox - x0] += w * grow[ox];
              } else {
                for (int ox = x0; ox < x1; ++ox) irow[(ox - x0) * s] += w * grow[ox];
              }
            }
          }
        }
      }
    }
  });
  return gin;
}

void conv2d_backward_params(const Tensor& grad_out, const Tensor& input, const ConvSpec& spec,
                            Tensor& grad_weights, Tensor& grad_bias) {
  require_4d(grad_out, "conv2d_backward_params");
  require_4d(input, "conv2d_backward_params");
  const int N = grad_out.dim(0), K = grad_out.dim(1), OH = grad_out.dim(2), OW = grad_out.dim(3);
  const int C = spec.in_channels, k = spec.kernel_size, s = spec.stride, p = spec.padding;
  const int H = input.dim(2), W = input.dim(3);
  grad_weights = Tensor(spec.weights.shape);
  grad_bias = Tensor(spec.bias.shape);
  const float* go = grad_out.data.data();
  const float* in = input.data.data();

  parallel_for(static_cast<std::size_t>(K), [&](std::size_t b, std::size_t e) {
    for (std::size_t co = b; co < e; ++co) {
      double bsum = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* goc = go + (static_cast<std::size_t>(n) * K + co) * OH * OW;
        for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i) bsum += goc[i];
        for (int ci = 0; ci < C; ++ci) {
          const float* inc = in + (static_cast<std::size_t>(n) * C + ci) * H * W;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int x0 = std::max(0, ceil_div(p - kx, s));
              const int x1 = std::min(OW, ceil_div(W + p - kx, s));
              if (x0 >= x1) continue;
              float acc = 0.0f;
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * s + ky - p;
                if (iy < 0 || iy >= H) continue;
                const float* grow = goc + static_cast<std::size_t>(oy) * OW;
                const float* irow = inc + static_cast<std::size_t>(iy) * W + (x0 * s + kx - p);
                if (s == 1) {
                  for (int ox = x0; ox < x1; ++ox) acc += grow[ox] * irow[ox - x0];
                } else {
                  for (int ox = x0; ox < x1; ++ox) acc += grow[ox] * irow[(ox - x0) * s];
                }
              }
              grad_weights[((co * C + ci) * k + ky) * k + kx] += acc;
            }
          }
        }
      }
      grad_bias[co] = static_cast<float>(bsum);
    }
  });
}

Tensor batch_norm_backward(const Tensor& grad_out, const BatchNormSpec& spec,
                           const BatchNormCache& cache, Tensor& grad_gamma, Tensor& grad_beta) {
  require_4d(grad_out, "batch_norm_backward");
  const int N = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const double m = static_cast<double>(N) * plane;
  grad_gamma = Tensor(spec.gamma.shape);
  grad_beta = Tensor(spec.beta.shape);
  Tensor gin(grad_out.shape);

  parallel_for(static_cast<std::size_t>(C), [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for (int n = 0; n < N; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
        const float* gy = grad_out.data.data() + off;
        const float* xh = cache.x_hat.data.data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_gy += gy[i];
          sum_gy_xhat += static_cast<double>(gy[i]) * xh[i];
        }
      }
      grad_gamma[c] = static_cast<float>(sum_gy_xhat);
      grad_beta[c] = static_cast<float>(sum_gy);
      const double g = spec.gamma[c], istd = cache.inv_std[c];
      for (int n = 0; n < N; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
        const float* gy = grad_out.data.data() + off;
        const float* xh = cache.x_hat.data.data() + off;
        float* gx = gin.data.data() + off;
        for (std::size_t i = 0; i < plane; ++i)
          gx[i] = static_cast<float>(g * istd *
                                     (gy[i] - sum_gy / m - xh[i] * sum_gy_xhat / m));
      }
    }
  });
  return gin;
}

Tensor avg_pool2d_backward(const Tensor& grad_out, int k, int s, int in_h, int in_w) {
  require_4d(grad_out, "avg_pool2d_backward");
  const int N = grad_out.dim(0), C = grad_out.dim(1), OH = grad_out.dim(2), OW = grad_out.dim(3);
  Tensor gin({N, C, in_h, in_w});
  const float inv = 1.0f / static_cast<float>(k * k);
  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const float* gy = grad_out.data.data() + u * static_cast<std::size_t>(OH) * OW;
      float* gx = gin.data.data() + u * static_cast<std::size_t>(in_h) * in_w;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const float g = gy[static_cast<std::size_t>(oy) * OW + ox] * inv;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx)
              gx[static_cast<std::size_t>(oy * s + dy) * in_w + ox * s + dx] += g;
        }
    }
  });
  return gin;
}

Tensor max_pool2d_backward(const Tensor& grad_out, const Tensor& input, int k, int s) {
  require_4d(grad_out, "max_pool2d_backward");
  const int N = grad_out.dim(0), C = grad_out.dim(1), OH = grad_out.dim(2), OW = grad_out.dim(3);
  const int H = input.dim(2), W = input.dim(3);
  Tensor gin(input.shape);
  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const float* x = input.data.data() + u * static_cast<std::size_t>(H) * W;
      const float* gy = grad_out.data.data() + u * static_cast<std::size_t>(OH) * OW;
      float* gx = gin.data.data() + u * static_cast<std::size_t>(H) * W;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          int best_y = oy * s, best_x = ox * s;
          float best = x[static_cast<std::size_t>(best_y) * W + best_x];
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const float v = x[static_cast<std::size_t>(oy * s + dy) * W + ox * s + dx];
              if (v > best) {
                best = v;
                best_y = oy * s + dy;
                best_x = ox * s + dx;
              }
            }
          gx[static_cast<std::size_t>(best_y) * W + best_x] +=
              gy[static_cast<std::size_t>(oy) * OW + ox];
        }
    }
  });
  return gin;
}

Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& input, float slope) {
  check_same_shape(grad_out, input, "leaky_relu_backward");
  Tensor gin(input.shape);
  parallel_for(input.numel(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      gin[i] = input[i] >= 0.0f ? grad_out[i] : slope * grad_out[i];
  });
  return gin;
}

Tensor upsample_nearest_backward(const Tensor& grad_out, int factor) {
  require_4d(grad_out, "upsample_nearest_backward");
  const int N = grad_out.dim(0), C = grad_out.dim(1), OH = grad_out.dim(2), OW = grad_out.dim(3);
  const int H = OH / factor, W = OW / factor;
  Tensor gin({N, C, H, W});
  parallel_for(static_cast<std::size_t>(N) * C, [&](std::size_t b, std::size_t e) {
    for (std::size_t u = b; u < e; ++u) {
      const float* gy = grad_out.data.data() + u * static_cast<std::size_t>(OH) * OW;
      float* gx = gin.data.data() + u * static_cast<std::size_t>(H) * W;
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix) {
          float sum = 0.0f;
          for (int fy = 0; fy < factor; ++fy)
            for (int fx = 0; fx < factor; ++fx)
              sum += gy[static_cast<std::size_t>(iy * factor + fy) * OW + ix * factor + fx];
          gx[static_cast<std::size_t>(iy) * W + ix] = sum;
        }
    }
  });
  return gin;
}

} // namespace spikedet
