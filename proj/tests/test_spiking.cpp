#include <doctest.h>

#include <cstring>

#include "spikedet/qcfs.hpp"
#include "spikedet/rng.hpp"
#include "spikedet/spiking.hpp"

using namespace spikedet;

// Dyadic grid over [-lambda, 2*lambda]: every value, and every membrane sum
// reached from them, is exactly representable in float, so the QCFS-IF
// comparison is exact arithmetic with no rounding at boundaries.
static std::vector<float> dyadic_grid(float lambda, int log2_points) {
  const int n = 1 << log2_points;
  std::vector<float> g;
  g.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i)
    g.push_back(lambda * (-1.0f + 3.0f * static_cast<float>(i) / static_cast<float>(n)));
  return g;
}

TEST_CASE("if_init sets v = theta/2 and t = 0") {
  const IFNeuronState s = if_init({2, 3}, 1.0f);
  REQUIRE(s.v.shape == std::vector<int>{2, 3});
  for (float v : s.v.data) CHECK(v == 0.5f);
  CHECK(s.t == 0);

  const IFNeuronState s2 = if_init({1}, 2.0f);
  CHECK(s2.v[0] == 1.0f);

  CHECK_THROWS_AS(if_init({1}, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(if_init({1}, -1.0f), std::invalid_argument);
}

TEST_CASE("if_step dynamics: integrate, fire at threshold, soft reset") {
  IFNeuronState s = if_init({1}, 1.0f);

  SUBCASE("reaching theta fires and subtracts") {
    const Tensor spike = if_step(s, Tensor({1}, {0.5f}));
    CHECK(spike[0] == 1.0f);
    CHECK(s.v[0] == 0.0f);
    CHECK(s.t == 1);
  }
  SUBCASE("zero input leaves the membrane") {
    const Tensor spike = if_step(s, Tensor({1}, {0.0f}));
    CHECK(spike[0] == 0.0f);
    CHECK(s.v[0] == 0.5f);
  }
  SUBCASE("negative input is allowed and never fires") {
    const Tensor spike = if_step(s, Tensor({1}, {-1.0f}));
    CHECK(spike[0] == 0.0f);
    CHECK(s.v[0] == -0.5f);
  }
  SUBCASE("shape mismatch errors") {
    CHECK_THROWS_AS(if_step(s, Tensor({2})), std::invalid_argument);
  }
}

TEST_CASE("if_run_constant examples") {
  SUBCASE("z=0.5 theta=1 T=4 spikes 1,0,1,0 and rate 0.5") {
    const SpikeTrace tr = if_run_constant(Tensor({1}, {0.5f}), 1.0f, 4);
    REQUIRE(tr.spikes.size() == 4);
    CHECK(tr.spikes[0][0] == 1.0f);
    CHECK(tr.spikes[1][0] == 0.0f);
    CHECK(tr.spikes[2][0] == 1.0f);
    CHECK(tr.spikes[3][0] == 0.0f);
    CHECK(rate_readout(tr)[0] == 0.5f);
    CHECK(rate_readout(tr)[0] ==
          static_cast<float>(qcfs_forward_scalar(0.5, QCFSParams{1.0f, 4, 0.5f})));
  }
  SUBCASE("zero input never fires") {
    CHECK(rate_readout(if_run_constant(Tensor({1}, {0.0f}), 1.0f, 8))[0] == 0.0f);
  }
  SUBCASE("z >= theta saturates at rate theta") {
    const SpikeTrace tr = if_run_constant(Tensor({1}, {2.5f}), 2.0f, 6);
    for (const Tensor& s : tr.spikes) CHECK(s[0] == 1.0f);
    CHECK(rate_readout(tr)[0] == 2.0f);
  }
  SUBCASE("T < 1 errors") {
    CHECK_THROWS_AS(if_run_constant(Tensor({1}, {0.5f}), 1.0f, 0), std::invalid_argument);
  }
}

TEST_CASE("rate_readout examples and the postsynaptic scaling") {
  SpikeTrace tr;
  tr.theta = 2.0f;
  tr.T = 4;
  tr.spikes = {Tensor({1}, {1.0f}), Tensor({1}, {0.0f}), Tensor({1}, {1.0f}),
               Tensor({1}, {0.0f})};
  CHECK(rate_readout(tr)[0] == 1.0f); // 2 * 2 / 4
  CHECK(tr.postsynaptic(0)[0] == 2.0f);
  CHECK(tr.postsynaptic(1)[0] == 0.0f);
  CHECK(tr.total_spikes() == 2);

  SpikeTrace incomplete;
  incomplete.theta = 1.0f;
  incomplete.T = 4;
  incomplete.spikes = {Tensor({1}, {1.0f})};
  CHECK_THROWS_AS(rate_readout(incomplete), std::invalid_argument);
}

TEST_CASE("QCFS-IF equivalence at T = L is exact on a dyadic grid") {
  for (float lambda : {0.5f, 1.0f, 3.0f}) {
    const std::vector<float> grid = dyadic_grid(lambda, 12);
    const Tensor z({static_cast<int>(grid.size())}, grid);
    for (int L : {1, 2, 4, 8, 16, 32}) {
      QCFSParams p;
      p.lambda = lambda;
      p.L = L;
      p.phi = 0.5f;
      const Tensor rate = rate_readout(if_run_constant(z, lambda, L));
      const Tensor h = qcfs_forward(z, p);
      double max_err = 0.0;
      for (std::size_t i = 0; i < h.numel(); ++i)
        max_err = std::max(max_err, std::abs(static_cast<double>(rate[i]) - h[i]));
      INFO("lambda ", lambda, " L ", L);
      CHECK(max_err == 0.0);
    }
  }
}

TEST_CASE("charge conservation under soft reset is exact for dyadic inputs") {
  Rng rng(99);
  IFNeuronState s = if_init({8}, 1.0f);
  std::vector<float> input_sum(8, 0.0f);
  std::vector<int> spike_count(8, 0);
  const int T = 23;
  for (int t = 0; t < T; ++t) {
    Tensor in({8});
    for (int i = 0; i < 8; ++i)
      in[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform_int(-64, 128)) / 64.0f;
    const Tensor spikes = if_step(s, in);
    for (int i = 0; i < 8; ++i) {
      input_sum[static_cast<std::size_t>(i)] += in[static_cast<std::size_t>(i)];
      spike_count[static_cast<std::size_t>(i)] +=
          static_cast<int>(spikes[static_cast<std::size_t>(i)]);
    }
  }
  for (int i = 0; i < 8; ++i) {
    const float expect = 0.5f + input_sum[static_cast<std::size_t>(i)] -
                         1.0f * static_cast<float>(spike_count[static_cast<std::size_t>(i)]);
    CHECK(s.v[static_cast<std::size_t>(i)] == expect);
  }
  CHECK(s.t == T);
}

TEST_CASE("rates live on the grid {0, theta/T, ..., theta}") {
  Rng rng(7);
  const float theta = 1.5f;
  for (int T : {1, 3, 8}) {
    Tensor z({64});
    for (float& v : z.data) v = static_cast<float>(rng.uniform(-2.0, 4.0));
    const Tensor rate = rate_readout(if_run_constant(z, theta, T));
    for (float r : rate.data) {
      CHECK(r >= 0.0f);
      CHECK(r <= theta);
      const double steps = static_cast<double>(r) * T / theta;
      CHECK(std::abs(steps - std::round(steps)) <= 1e-6);
    }
  }
}

TEST_CASE("identical inputs produce identical spike trains") {
  Rng rng(31);
  Tensor z({128});
  for (float& v : z.data) v = static_cast<float>(rng.uniform(-1.0, 2.0));
  const SpikeTrace a = if_run_constant(z, 1.0f, 9);
  const SpikeTrace b = if_run_constant(z, 1.0f, 9);
  for (int t = 0; t < 9; ++t)
    CHECK(std::memcmp(a.spikes[static_cast<std::size_t>(t)].data.data(),
                      b.spikes[static_cast<std::size_t>(t)].data.data(),
                      z.numel() * sizeof(float)) == 0);
}

TEST_CASE("scalar fast path matches the tensor simulation") {
  Rng rng(55);
  for (int i = 0; i < 200; ++i) {
    const double z = rng.uniform(-1.5, 3.0);
    const int T = rng.uniform_int(1, 32);
    const float theta = static_cast<float>(rng.uniform(0.25, 3.0));
    const Tensor rate = rate_readout(if_run_constant(Tensor({1}, {static_cast<float>(z)}), theta, T));
    const double scalar = if_rate_constant_scalar(static_cast<float>(z), theta, T);
    CHECK(std::abs(rate[0] - scalar) <= 1e-6);
  }
}
