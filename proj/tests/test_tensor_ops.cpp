#include <doctest.h>

#include <cstring>

#include "spikedet/nn_ops.hpp"
#include "spikedet/parallel.hpp"
#include "spikedet/rng.hpp"

using namespace spikedet;

namespace {

Tensor ramp4x4() {
  Tensor t({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) t[static_cast<std::size_t>(i)] = static_cast<float>(i);
  return t;
}

ConvSpec conv_of(int cin, int cout, int k, int s, int p, std::vector<float> w = {},
                 std::vector<float> b = {}) {
  ConvSpec c;
  c.in_channels = cin;
  c.out_channels = cout;
  c.kernel_size = k;
  c.stride = s;
  c.padding = p;
  c.weights = w.empty() ? Tensor({cout, cin, k, k}) : Tensor({cout, cin, k, k}, std::move(w));
  c.bias = b.empty() ? Tensor({cout}) : Tensor({cout}, std::move(b));
  return c;
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

} // namespace

TEST_CASE("conv2d identity kernel passes input through") {
  Tensor in = Tensor::full({1, 1, 3, 3}, 1.0f);
  const Tensor out = conv2d(in, conv_of(1, 1, 1, 1, 0, {1.0f}, {0.0f}));
  REQUIRE(out.shape == std::vector<int>{1, 1, 3, 3});
  for (float v : out.data) CHECK(v == 1.0f);
}

TEST_CASE("conv2d zero kernel returns the bias") {
  Rng rng(7);
  Tensor in = random_tensor(rng, {2, 3, 5, 5});
  ConvSpec c = conv_of(3, 2, 3, 1, 1, std::vector<float>(2 * 3 * 9, 0.0f), {4.5f, -1.25f});
  const Tensor out = conv2d(in, c);
  for (int n = 0; n < 2; ++n)
    for (int oy = 0; oy < 5; ++oy)
      for (int ox = 0; ox < 5; ++ox) {
        CHECK(out.at(n, 0, oy, ox) == 4.5f);
        CHECK(out.at(n, 1, oy, ox) == -1.25f);
      }
}

TEST_CASE("conv2d 2x2 ones kernel stride 2 on the 0..15 ramp") {
  const Tensor out = conv2d(ramp4x4(), conv_of(1, 1, 2, 2, 0, {1, 1, 1, 1}, {0}));
  REQUIRE(out.shape == std::vector<int>{1, 1, 2, 2});
  CHECK(out[0] == 10.0f);
  CHECK(out[1] == 18.0f);
  CHECK(out[2] == 42.0f);
  CHECK(out[3] == 50.0f);
}

TEST_CASE("conv2d output spatial dims follow (H + 2p - k)/s + 1") {
  Rng rng(3);
  Tensor in = random_tensor(rng, {1, 2, 11, 9});
  ConvSpec c = conv_of(2, 4, 3, 2, 1, std::vector<float>(4 * 2 * 9, 0.25f),
                       std::vector<float>(4, 0.0f));
  const Tensor out = conv2d(in, c);
  CHECK(out.shape == std::vector<int>{1, 4, (11 + 2 - 3) / 2 + 1, (9 + 2 - 3) / 2 + 1});
}

TEST_CASE("conv2d shape mismatch names both shapes") {
  Tensor in({1, 2, 4, 4});
  ConvSpec c = conv_of(3, 1, 1, 1, 0, {1, 1, 1}, {0});
  try {
    conv2d(in, c);
    FAIL("expected exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1x2x4x4)") != std::string::npos);
    CHECK(msg.find("(1x3x1x1)") != std::string::npos);
  }
}

TEST_CASE("conv2d is linear in its input for zero bias") {
  Rng rng(11);
  ConvSpec c = conv_of(2, 3, 3, 1, 1, {}, {});
  c.weights = random_tensor(rng, {3, 2, 3, 3});
  c.bias = Tensor({3});
  const Tensor x = random_tensor(rng, {1, 2, 6, 6});
  const Tensor y = random_tensor(rng, {1, 2, 6, 6});
  const float a = 2.5f, b = -1.25f;
  Tensor mix({1, 2, 6, 6});
  for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = a * x[i] + b * y[i];
  const Tensor lhs = conv2d(mix, c);
  const Tensor cx = conv2d(x, c), cy = conv2d(y, c);
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    const double rhs = static_cast<double>(a) * cx[i] + static_cast<double>(b) * cy[i];
    CHECK(std::abs(lhs[i] - rhs) <= 1e-6 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("batch_norm_infer identity and affine examples") {
  BatchNormSpec bn;
  bn.gamma = Tensor({1}, {1.0f});
  bn.beta = Tensor({1}, {0.0f});
  bn.running_mean = Tensor({1}, {0.0f});
  bn.running_var = Tensor({1}, {1.0f});
  bn.epsilon = 1e-12f; // effectively zero
  Tensor x({1, 1, 1, 1}, {3.0f});

  SUBCASE("identity normalization") {
    const Tensor y = batch_norm_infer(x, bn);
    CHECK(y[0] == doctest::Approx(3.0f));
  }
  SUBCASE("gamma=2 beta=1 maps 3 to 7") {
    bn.gamma[0] = 2.0f;
    bn.beta[0] = 1.0f;
    CHECK(batch_norm_infer(x, bn)[0] == doctest::Approx(7.0f));
  }
  SUBCASE("(4 - 2)/2 = 1") {
    bn.running_mean[0] = 2.0f;
    bn.running_var[0] = 4.0f;
    x[0] = 4.0f;
    CHECK(batch_norm_infer(x, bn)[0] == doctest::Approx(1.0f));
  }
}

TEST_CASE("batch_norm_infer rejects non-finite spec values") {
  BatchNormSpec bn;
  bn.gamma = Tensor({1}, {std::numeric_limits<float>::quiet_NaN()});
  bn.beta = Tensor({1});
  bn.running_mean = Tensor({1});
  bn.running_var = Tensor({1}, {1.0f});
  Tensor x({1, 1, 1, 1}, {1.0f});
  CHECK_THROWS_AS(batch_norm_infer(x, bn), std::invalid_argument);
}

TEST_CASE("batch_norm_infer composed with its analytic inverse is identity") {
  Rng rng(5);
  BatchNormSpec bn;
  bn.gamma = Tensor({3}, {1.5f, -0.75f, 2.0f});
  bn.beta = Tensor({3}, {0.25f, 1.0f, -2.0f});
  bn.running_mean = Tensor({3}, {0.5f, -1.0f, 3.0f});
  bn.running_var = Tensor({3}, {4.0f, 0.25f, 1.0f});
  bn.epsilon = 1e-5f;
  const Tensor x = random_tensor(rng, {2, 3, 4, 4}, -3.0, 3.0);
  const Tensor y = batch_norm_infer(x, bn);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w) {
          const double inv = (y.at(n, c, h, w) - bn.beta[c]) / bn.gamma[c] *
                                 std::sqrt(static_cast<double>(bn.running_var[c]) + bn.epsilon) +
                             bn.running_mean[c];
          CHECK(std::abs(inv - x.at(n, c, h, w)) <= 1e-6 * std::max(1.0, std::abs(inv)));
        }
}

TEST_CASE("avg_pool2d examples") {
  SUBCASE("window 1 2 3 4 averages to 2.5") {
    Tensor t({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(avg_pool2d(t, 2, 2)[0] == 2.5f);
  }
  SUBCASE("constant input stays constant") {
    const Tensor out = avg_pool2d(Tensor::full({1, 2, 4, 4}, 3.25f), 2, 2);
    for (float v : out.data) CHECK(v == 3.25f);
  }
  SUBCASE("ramp 0..15") {
    const Tensor out = avg_pool2d(ramp4x4(), 2, 2);
    CHECK(out[0] == 2.5f);
    CHECK(out[1] == 4.5f);
    CHECK(out[2] == 10.5f);
    CHECK(out[3] == 12.5f);
  }
  SUBCASE("zero k or s errors") {
    CHECK_THROWS_AS(avg_pool2d(ramp4x4(), 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(avg_pool2d(ramp4x4(), 2, 0), std::invalid_argument);
  }
}

TEST_CASE("max_pool2d examples") {
  SUBCASE("window 1 2 3 4 maxes to 4") {
    Tensor t({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(max_pool2d(t, 2, 2)[0] == 4.0f);
  }
  SUBCASE("constant input stays constant") {
    const Tensor out = max_pool2d(Tensor::full({1, 1, 3, 3}, -2.0f), 2, 1);
    for (float v : out.data) CHECK(v == -2.0f);
  }
  SUBCASE("ramp 0..15") {
    const Tensor out = max_pool2d(ramp4x4(), 2, 2);
    CHECK(out[0] == 5.0f);
    CHECK(out[1] == 7.0f);
    CHECK(out[2] == 13.0f);
    CHECK(out[3] == 15.0f);
  }
}

TEST_CASE("avg pooling times k^2 equals sum pooling exactly for power-of-two k") {
  Rng rng(13);
  for (int k : {2, 4}) {
    const Tensor x = random_tensor(rng, {1, 2, 8, 8});
    const Tensor avg = avg_pool2d(x, k, k);
    const int OH = avg.dim(2), OW = avg.dim(3);
    for (int c = 0; c < 2; ++c)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          float sum = 0.0f;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) sum += x.at(0, c, oy * k + dy, ox * k + dx);
          CHECK(avg.at(0, c, oy, ox) * static_cast<float>(k * k) == sum);
        }
  }
}

TEST_CASE("leaky_relu examples") {
  Tensor t({3}, {5.0f, 0.0f, -1.0f});
  const Tensor out = leaky_relu(t, 0.1f);
  CHECK(out[0] == 5.0f);
  CHECK(out[1] == 0.0f);
  CHECK(out[2] == doctest::Approx(-0.1f));
  CHECK_THROWS_AS(leaky_relu(t, 1.0f), std::invalid_argument);
  CHECK_THROWS_AS(leaky_relu(t, -0.1f), std::invalid_argument);
}

TEST_CASE("ops are pure and bit-stable across thread counts") {
  Rng rng(17);
  ConvSpec c = conv_of(3, 5, 3, 1, 1, {}, {});
  c.weights = random_tensor(rng, {5, 3, 3, 3});
  c.bias = random_tensor(rng, {5});
  const Tensor x = random_tensor(rng, {2, 3, 16, 16});

  const Tensor once = conv2d(x, c);
  const Tensor twice = conv2d(x, c);
  REQUIRE(once.numel() == twice.numel());
  CHECK(std::memcmp(once.data.data(), twice.data.data(), once.numel() * sizeof(float)) == 0);

  set_num_threads(2);
  const Tensor threaded = conv2d(x, c);
  set_num_threads(1);
  CHECK(std::memcmp(once.data.data(), threaded.data.data(), once.numel() * sizeof(float)) == 0);

  set_num_threads(3);
  const Tensor pooled_a = avg_pool2d(x, 2, 2);
  set_num_threads(1);
  const Tensor pooled_b = avg_pool2d(x, 2, 2);
  CHECK(std::memcmp(pooled_a.data.data(), pooled_b.data.data(),
                    pooled_a.numel() * sizeof(float)) == 0);
}

TEST_CASE("all primitive ops keep finite inputs finite") {
  Rng rng(23);
  const Tensor x = random_tensor(rng, {1, 2, 8, 8}, -100.0, 100.0);
  ConvSpec c = conv_of(2, 2, 3, 1, 1, {}, {});
  c.weights = random_tensor(rng, {2, 2, 3, 3}, -10.0, 10.0);
  c.bias = random_tensor(rng, {2});
  CHECK(conv2d(x, c).all_finite());
  CHECK(avg_pool2d(x, 2, 2).all_finite());
  CHECK(max_pool2d(x, 2, 2).all_finite());
  CHECK(leaky_relu(x, 0.01f).all_finite());
  CHECK(upsample_nearest(x, 2).all_finite());
}
