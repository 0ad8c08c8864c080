#pragma once

#include "spikedet/tensor.hpp"

namespace spikedet {

// Integrate-and-fire layer state with soft reset (subtract the threshold on
// spike). Membrane potentials start at theta/2; negative potentials are
// allowed so that v(T) == v(0) + sum(inputs) - theta * spike_count holds
// exactly.
struct IFNeuronState {
  Tensor v;
  float theta = 1.0f;
  int t = 0;
};

IFNeuronState if_init(const std::vector<int>& shape, float theta);

// One timestep: v += input; where v >= theta, emit a spike and subtract
// theta. Returns the binary spike tensor.
Tensor if_step(IFNeuronState& state, const Tensor& input_current);

// Recorded spike train of a constant-input run.
struct SpikeTrace {
  std::vector<Tensor> spikes; // binary tensors, one per timestep
  float theta = 1.0f;
  int T = 0;

  // x(t) = s(t) * theta
  Tensor postsynaptic(int t) const;
  bool complete() const { return static_cast<int>(spikes.size()) == T && T > 0; }
  std::size_t total_spikes() const;
};

// Presents z at every timestep for T steps and records the spikes.
SpikeTrace if_run_constant(const Tensor& z, float theta, int T);

// phi(T) = sum_t x(t) / T, elementwise in [0, theta].
Tensor rate_readout(const SpikeTrace& trace);

// Scalar fast path used by the Monte Carlo analyzers; identical dynamics to
// if_run_constant on a 1-element tensor.
double if_rate_constant_scalar(double z, double theta, int T);

} // namespace spikedet
