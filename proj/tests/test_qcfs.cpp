#include <doctest.h>

#include <cmath>

#include "spikedet/qcfs.hpp"

using namespace spikedet;

namespace {

QCFSParams params(float lambda, int L, float phi = 0.5f, SteBand band = SteBand::kCentered) {
  QCFSParams p;
  p.lambda = lambda;
  p.L = L;
  p.phi = phi;
  p.band = band;
  return p;
}

float fwd1(float z, const QCFSParams& p) { return qcfs_forward(Tensor({1}, {z}), p)[0]; }
float gz1(float z, const QCFSParams& p) { return qcfs_grad_z(Tensor({1}, {z}), p)[0]; }
float gl1(float z, const QCFSParams& p) { return qcfs_grad_lambda(Tensor({1}, {z}), p)[0]; }

} // namespace

TEST_CASE("qcfs_forward hand examples at lambda=1 L=4 phi=1/2") {
  const QCFSParams p = params(1.0f, 4);
  CHECK(fwd1(0.0f, p) == 0.0f);            // floor(0.5) = 0
  CHECK(fwd1(3.0f, p) == 1.0f);            // clip saturates
  CHECK(fwd1(0.5f, p) == 0.5f);            // floor(2.5) = 2 -> 2/4
  CHECK(fwd1(0.3f, p) == 0.25f);           // floor(1.7) = 1 -> 1/4
  CHECK(fwd1(-2.0f, p) == 0.0f);           // clip at zero
}

TEST_CASE("qcfs_forward outputs lie on the quantization grid in [0, lambda]") {
  for (float lambda : {0.5f, 1.0f, 3.0f}) {
    for (int L : {1, 3, 4, 7, 16}) {
      const QCFSParams p = params(lambda, L);
      for (int i = 0; i <= 400; ++i) {
        const float z = -1.5f * lambda + 4.0f * lambda * static_cast<float>(i) / 400.0f;
        const float h = fwd1(z, p);
        CHECK(h >= 0.0f);
        CHECK(h <= lambda);
        const double steps = static_cast<double>(h) * L / lambda;
        CHECK(std::abs(steps - std::round(steps)) <= 1e-6);
      }
    }
  }
}

TEST_CASE("qcfs_forward is monotone") {
  const QCFSParams p = params(2.0f, 8);
  float prev = fwd1(-3.0f, p);
  for (int i = 1; i <= 600; ++i) {
    const float z = -3.0f + 7.0f * static_cast<float>(i) / 600.0f;
    const float h = fwd1(z, p);
    CHECK(h >= prev);
    prev = h;
  }
}

TEST_CASE("qcfs approaches clip(z, 0, lambda) as L grows") {
  const float lambda = 1.5f;
  const QCFSParams p = params(lambda, 1 << 10);
  double max_err = 0.0;
  for (int i = 0; i <= 20000; ++i) {
    const double z = -lambda + 3.0 * lambda * i / 20000.0;
    const double clip = std::clamp(z, 0.0, static_cast<double>(lambda));
    max_err = std::max(max_err, std::abs(fwd1(static_cast<float>(z), p) - clip));
  }
  CHECK(max_err <= lambda / (1 << 10));
}

TEST_CASE("qcfs_grad_z examples") {
  const QCFSParams p = params(1.0f, 4);
  CHECK(gz1(0.5f, p) == 1.0f);  // interior: -0.125 < 0.5 < 0.875
  CHECK(gz1(1.0f, p) == 0.0f);  // above 0.875
  CHECK(gz1(-1.0f, p) == 0.0f); // far below
}

TEST_CASE("qcfs_grad_z is the exact band indicator on both sides of each boundary") {
  for (float lambda : {0.5f, 1.0f, 3.0f}) {
    for (int L : {2, 4, 8}) {
      const QCFSParams p = params(lambda, L);
      const float lo = -lambda / (2.0f * L);
      const float hi = lambda - lambda / (2.0f * L);
      const float eps = 1e-4f;
      CHECK(gz1(lo - eps, p) == 0.0f);
      CHECK(gz1(lo + eps, p) == 1.0f);
      CHECK(gz1(hi - eps, p) == 1.0f);
      CHECK(gz1(hi + eps, p) == 0.0f);
    }
  }
}

TEST_CASE("qcfs_grad_lambda examples and boundaries") {
  const QCFSParams p = params(1.0f, 4);
  CHECK(gl1(-1.0f, p) == 0.0f);
  CHECK(gl1(2.0f, p) == 1.0f);  // z >= lambda - lambda/(2L)
  CHECK(gl1(0.5f, p) == 0.0f);  // (h(0.5) - 0.5)/1 = 0

  // inside the band the value is (h(z) - z)/lambda
  const float z = 0.3f;
  CHECK(gl1(z, p) == doctest::Approx((0.25f - z) / 1.0f));
  // at exactly the upper edge the saturated case wins (printed ">=")
  CHECK(gl1(1.0f - 0.125f, p) == 1.0f);
  // at exactly the lower edge the zero case wins
  CHECK(gl1(-0.125f, p) == 0.0f);
}

TEST_CASE("grad_lambda matches central finite differences in the saturated region") {
  for (float lambda : {0.5f, 1.0f, 3.0f}) {
    const QCFSParams p = params(lambda, 4);
    const float z = 2.0f * lambda; // well above the band
    const float eps = 1e-3f * lambda;
    QCFSParams hi = p, lo = p;
    hi.lambda = lambda + eps;
    lo.lambda = lambda - eps;
    const double fd = (fwd1(z, hi) - fwd1(z, lo)) / (2.0 * eps);
    CHECK(std::abs(fd - 1.0) <= 1e-3);
    CHECK(gl1(z, p) == 1.0f);
  }
}

TEST_CASE("the wide band convention moves only the upper edge") {
  const QCFSParams centered = params(1.0f, 4, 0.5f, SteBand::kCentered);
  const QCFSParams wide = params(1.0f, 4, 0.5f, SteBand::kWide);
  // between lambda - lambda/(2L) and lambda + lambda/(2L)
  const float z = 1.0f;
  CHECK(gz1(z, centered) == 0.0f);
  CHECK(gz1(z, wide) == 1.0f);
  // lower edge identical
  CHECK(gz1(-0.13f, centered) == gz1(-0.13f, wide));
  // grad_lambda saturation point follows the band's upper edge
  CHECK(gl1(z, centered) == 1.0f);
  CHECK(gl1(z, wide) == doctest::Approx((fwd1(z, wide) - z) / 1.0f));
}

TEST_CASE("qcfs_layer_backward composes the two gradients") {
  const QCFSParams p = params(1.0f, 4);

  SUBCASE("zero upstream kills both outputs") {
    const Tensor z({4}, {0.1f, 0.5f, 2.0f, -1.0f});
    const Tensor up({4}, {0.0f, 0.0f, 0.0f, 0.0f});
    const QCFSBackward bw = qcfs_layer_backward(up, z, p);
    for (float v : bw.grad_z.data) CHECK(v == 0.0f);
    CHECK(bw.grad_lambda == 0.0f);
  }
  SUBCASE("interior element passes upstream through") {
    const QCFSBackward bw = qcfs_layer_backward(Tensor({1}, {1.0f}), Tensor({1}, {0.5f}), p);
    CHECK(bw.grad_z[0] == 1.0f);
  }
  SUBCASE("saturated element contributes upstream to grad_lambda") {
    const QCFSBackward bw = qcfs_layer_backward(Tensor({1}, {2.0f}), Tensor({1}, {2.0f}), p);
    CHECK(bw.grad_lambda == 2.0f);
  }
  SUBCASE("shape mismatch errors") {
    CHECK_THROWS_AS(qcfs_layer_backward(Tensor({2}), Tensor({3}), p), std::invalid_argument);
  }
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(params(0.0f, 4).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(1.0f, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(1.0f, 4, 1.0f).validate(), std::invalid_argument);
}
