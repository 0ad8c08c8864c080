#include "spikedet/spiking.hpp"

#include "spikedet/parallel.hpp"

namespace spikedet {

IFNeuronState if_init(const std::vector<int>& shape, float theta) {
  if (!(theta > 0.0f)) throw std::invalid_argument("if_init: theta must be positive");
  IFNeuronState s;
  s.v = Tensor::full(shape, theta / 2.0f);
  s.theta = theta;
  s.t = 0;
  return s;
}

Tensor if_step(IFNeuronState& state, const Tensor& input_current) {
  check_same_shape(state.v, input_current, "if_step");
  Tensor spikes(state.v.shape);
  const float theta = state.theta;
  parallel_for(state.v.numel(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      float v = state.v[i] + input_current[i];
      if (v >= theta) {
        spikes[i] = 1.0f;
        v -= theta;
      } else {
        spikes[i] = 0.0f;
      }
      state.v[i] = v;
    }
  });
  state.t += 1;
  return spikes;
}

Tensor SpikeTrace::postsynaptic(int t) const {
  Tensor x = spikes.at(static_cast<std::size_t>(t));
  for (float& v : x.data) v *= theta;
  return x;
}

std::size_t SpikeTrace::total_spikes() const {
  std::size_t n = 0;
  for (const Tensor& s : spikes)
    for (float v : s.data) n += v != 0.0f;
  return n;
}

SpikeTrace if_run_constant(const Tensor& z, float theta, int T) {
  if (T < 1) throw std::invalid_argument("if_run_constant: T must be >= 1");
  IFNeuronState state = if_init(z.shape, theta);
  SpikeTrace trace;
  trace.theta = theta;
  trace.T = T;
  trace.spikes.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) trace.spikes.push_back(if_step(state, z));
  return trace;
}

Tensor rate_readout(const SpikeTrace& trace) {
  if (!trace.complete())
    throw std::invalid_argument("rate_readout: trace incomplete (" +
                                std::to_string(trace.spikes.size()) + " of " +
                                std::to_string(trace.T) + " steps recorded)");
  Tensor rate(trace.spikes[0].shape);
  for (const Tensor& s : trace.spikes)
    for (std::size_t i = 0; i < rate.numel(); ++i) rate[i] += s[i];
  const float scale = trace.theta / static_cast<float>(trace.T);
  for (float& v : rate.data) v *= scale;
  return rate;
}

double if_rate_constant_scalar(double z, double theta, int T) {
  double v = theta / 2.0;
  int n = 0;
  for (int t = 0; t < T; ++t) {
    v += z;
    if (v >= theta) {
      ++n;
      v -= theta;
    }
  }
  return theta * static_cast<double>(n) / static_cast<double>(T);
}

} // namespace spikedet
