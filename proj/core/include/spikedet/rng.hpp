#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace spikedet {

// splitmix64 generator. Hand-rolled so that seeded runs are reproducible
// independent of the standard library's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // standard normal via Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1))]);
  }

  // Independent substream for (seed, stream) pairs.
  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
    r.next_u64();
    return r;
  }

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

} // namespace spikedet
