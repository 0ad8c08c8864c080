#include <doctest.h>

#include <cmath>
#include <cstring>

#include "spikedet/loss.hpp"
#include "spikedet/mathutil.hpp"
#include "spikedet/parallel.hpp"
#include "spikedet/rng.hpp"
#include "spikedet/synthetic.hpp"
#include "spikedet/trainer.hpp"

using namespace spikedet;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// small trainable net on 3x8x8 inputs: conv -> bn -> leaky -> avgpool ->
// head conv -> detect (stride 2, two anchors, two classes)
NetworkGraph tiny_trainable_net(std::uint64_t seed) {
  Rng rng(seed);
  NetworkGraph net;
  net.input_shape = {3, 8, 8};
  net.class_count = 2;

  DetectHeadSpec head;
  head.class_count = 2;
  head.anchors = {{3.0f, 3.0f}, {5.0f, 5.0f}};
  head.stride = 2;

  LayerSpec conv;
  conv.name = "conv";
  conv.kind = LayerKind::kConv;
  conv.inputs = {kInputEdge};
  conv.conv.in_channels = 3;
  conv.conv.out_channels = 4;
  conv.conv.kernel_size = 3;
  conv.conv.stride = 1;
  conv.conv.padding = 1;
  conv.conv.weights = random_tensor(rng, {4, 3, 3, 3}, -0.4, 0.4);
  conv.conv.bias = random_tensor(rng, {4}, -0.1, 0.1);
  net.layers.push_back(conv);

  LayerSpec bn;
  bn.name = "bn";
  bn.kind = LayerKind::kBatchNorm;
  bn.inputs = {0};
  bn.bn.gamma = random_tensor(rng, {4}, 0.8, 1.2);
  bn.bn.beta = random_tensor(rng, {4}, 0.3, 0.7);
  bn.bn.running_mean = Tensor({4});
  bn.bn.running_var = Tensor::full({4}, 1.0f);
  net.layers.push_back(bn);

  LayerSpec act;
  act.name = "act";
  act.kind = LayerKind::kActivation;
  act.inputs = {1};
  act.act.kind = ActivationKind::kLeakyRelu;
  act.act.leaky_slope = 0.1f;
  net.layers.push_back(act);

  LayerSpec pool;
  pool.name = "pool";
  pool.kind = LayerKind::kAvgPool;
  pool.inputs = {2};
  pool.pool = {2, 2};
  net.layers.push_back(pool);

  LayerSpec hc;
  hc.name = "head_conv";
  hc.kind = LayerKind::kConv;
  hc.inputs = {3};
  hc.conv.in_channels = 4;
  hc.conv.out_channels = head.channels();
  hc.conv.kernel_size = 1;
  hc.conv.stride = 1;
  hc.conv.padding = 0;
  hc.conv.weights = random_tensor(rng, {head.channels(), 4, 1, 1}, -0.5, 0.5);
  hc.conv.bias = random_tensor(rng, {head.channels()}, -0.2, 0.2);
  net.layers.push_back(hc);

  LayerSpec dh;
  dh.name = "detect";
  dh.kind = LayerKind::kDetectHead;
  dh.inputs = {4};
  dh.head = head;
  net.layers.push_back(dh);
  net.validate();
  return net;
}

std::vector<std::vector<GroundTruth>> tiny_truths() {
  // boxes centered inside cells, sized near the anchors, overlapping the
  // initial decoded boxes so the IoU term is active and smooth
  return {
      {{0, Box{3.0f, 3.2f, 3.4f, 3.0f}}},
      {{1, Box{5.2f, 4.8f, 4.6f, 5.2f}}},
  };
}

double loss_of(NetworkGraph net, const Tensor& batch,
               const std::vector<std::vector<GroundTruth>>& truths, const LossWeights& w) {
  ForwardTape tape;
  const DetectionOutput pred = forward_train(net, batch, 0.1f, tape);
  return yolo_loss(pred, truths, w).total;
}

} // namespace

TEST_CASE("synthetic dataset: determinism, balance, positive areas, bounds") {
  const auto a = generate_synthetic_dataset(60, 5);
  const auto b = generate_synthetic_dataset(60, 5);
  REQUIRE(a.size() == 60);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].image.data.data(), b[i].image.data.data(),
                      a[i].image.numel() * sizeof(float)) == 0);
    REQUIRE(a[i].truths.size() == b[i].truths.size());
    CHECK(a[i].truths[0].class_id == b[i].truths[0].class_id);
  }

  const auto c = generate_synthetic_dataset(60, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size() && !differs; ++i)
    differs = std::memcmp(a[i].image.data.data(), c[i].image.data.data(),
                          a[i].image.numel() * sizeof(float)) != 0;
  CHECK(differs);

  const auto big = generate_synthetic_dataset(1000, 7);
  int counts[3] = {0, 0, 0};
  for (const SyntheticScene& s : big) {
    REQUIRE(s.truths.size() >= 1);
    for (const GroundTruth& g : s.truths) {
      counts[g.class_id] += 1;
      CHECK(g.box.area() > 0.0f);
      CHECK(g.box.x1() >= 0.0f);
      CHECK(g.box.y1() >= 0.0f);
      CHECK(g.box.x2() <= 64.0f);
      CHECK(g.box.y2() <= 64.0f);
    }
    CHECK(s.image.all_finite());
  }
  for (int cls = 0; cls < 3; ++cls) {
    CHECK(counts[cls] >= 300);
    CHECK(counts[cls] <= 367);
  }
}

TEST_CASE("yolo_loss basics") {
  NetworkGraph net = tiny_trainable_net(3);
  Rng rng(4);
  const Tensor batch = random_tensor(rng, {2, 3, 8, 8}, 0.0, 1.0);
  const auto truths = tiny_truths();

  ForwardTape tape;
  const DetectionOutput pred = forward_train(net, batch, 0.1f, tape);

  SUBCASE("zero weights give zero total") {
    const YoloLossResult r = yolo_loss(pred, truths, LossWeights{0.0f, 0.0f, 0.0f});
    CHECK(r.total == 0.0);
    for (float g : r.grad_raw.data) CHECK(g == 0.0f);
  }

  SUBCASE("components are non-negative and total is the weighted sum") {
    const LossWeights w{0.05f, 1.0f, 0.5f};
    const YoloLossResult r = yolo_loss(pred, truths, w);
    CHECK(r.box >= 0.0);
    CHECK(r.objectness >= 0.0);
    CHECK(r.classification >= 0.0);
    CHECK(r.total == doctest::Approx(0.05 * r.box + 1.0 * r.objectness + 0.5 * r.classification));
    CHECK(r.assigned == 2);
  }

  SUBCASE("truth image count must match the batch") {
    CHECK_THROWS_AS(yolo_loss(pred, {{}}, LossWeights{}), std::invalid_argument);
  }
}

TEST_CASE("a perfect prediction has near-zero box and classification terms") {
  // hand-build a raw grid that decodes exactly onto one truth
  DetectHeadSpec head;
  head.class_count = 2;
  head.anchors = {{4.0f, 4.0f}};
  head.stride = 4;
  DetectionOutput pred;
  pred.head = head;
  pred.raw = Tensor({1, head.channels(), 2, 2});
  for (float& v : pred.raw.data) v = -12.0f; // background everywhere

  // truth at the center of cell (1, 0), exactly anchor sized
  const Box truth{6.0f, 2.0f, 4.0f, 4.0f};
  pred.raw.at(0, 0, 0, 1) = 0.0f;  // tx -> sigmoid 0.5 -> cx 6
  pred.raw.at(0, 1, 0, 1) = 0.0f;  // ty -> cy 2
  pred.raw.at(0, 2, 0, 1) = 0.0f;  // tw -> anchor w
  pred.raw.at(0, 3, 0, 1) = 0.0f;  // th
  pred.raw.at(0, 4, 0, 1) = 12.0f; // objectness ~ 1
  pred.raw.at(0, 5, 0, 1) = 12.0f; // class 0 ~ 1

  const YoloLossResult r = yolo_loss(pred, {{{0, truth}}}, LossWeights{1.0f, 1.0f, 1.0f});
  CHECK(r.box <= 1e-5);
  CHECK(r.classification <= 1e-4);
  CHECK(r.assigned == 1);
}

TEST_CASE("single-cell hand example: BCE and IoU computed by hand") {
  DetectHeadSpec head;
  head.class_count = 1;
  head.anchors = {{4.0f, 4.0f}};
  head.stride = 4;
  DetectionOutput pred;
  pred.head = head;
  pred.raw = Tensor({1, 6, 1, 1});
  // tx=ty=0 -> center (2,2); tw=th=0 -> 4x4 box; obj logit 1; cls logit -1
  pred.raw[0] = 0.0f;
  pred.raw[1] = 0.0f;
  pred.raw[2] = 0.0f;
  pred.raw[3] = 0.0f;
  pred.raw[4] = 1.0f;
  pred.raw[5] = -1.0f;

  // truth 4x4 at (3,2): intersection 3*4=12, union 16+16-12=20, IoU = 0.6
  const Box truth{3.0f, 2.0f, 4.0f, 4.0f};
  const YoloLossResult r = yolo_loss(pred, {{{0, truth}}}, LossWeights{1.0f, 1.0f, 1.0f});

  const double want_box = 1.0 - 12.0 / 20.0;
  const double want_obj = bce_with_logits(1.0, 1.0); // single cell, single anchor
  const double want_cls = bce_with_logits(-1.0, 1.0);
  CHECK(r.box == doctest::Approx(want_box));
  CHECK(r.objectness == doctest::Approx(want_obj));
  CHECK(r.classification == doctest::Approx(want_cls));
  CHECK(r.total == doctest::Approx(want_box + want_obj + want_cls));
}

TEST_CASE("sgd_update matches the closed form on a 1-parameter quadratic") {
  // f(w) = (w - 3)^2, grad = 2(w - 3), from w=0, lr=0.1, momentum 0.9
  float w = 0.0f, v = 0.0f;
  float g = 2.0f * (w - 3.0f);
  sgd_update(&w, &g, &v, 1, 0.1f, 0.9f);
  CHECK(v == doctest::Approx(-6.0f));
  CHECK(w == doctest::Approx(0.6f));
  // second step: v = 0.9*(-6) + 2*(0.6-3) = -10.2; w = 0.6 + 1.02
  g = 2.0f * (w - 3.0f);
  sgd_update(&w, &g, &v, 1, 0.1f, 0.9f);
  CHECK(v == doctest::Approx(-10.2f));
  CHECK(w == doctest::Approx(1.62f));
}

TEST_CASE("backprop matches central finite differences on every parameter") {
  NetworkGraph net = tiny_trainable_net(17);
  Rng rng(18);
  const Tensor batch = random_tensor(rng, {2, 3, 8, 8}, 0.1, 0.9);
  const auto truths = tiny_truths();
  const LossWeights w{0.5f, 1.0f, 0.5f};

  ForwardTape tape;
  const DetectionOutput pred = forward_train(net, batch, 0.1f, tape);
  const YoloLossResult loss = yolo_loss(pred, truths, w);
  const std::vector<LayerGrads> grads = backward_train(net, tape, loss.grad_raw);

  const float eps = 1e-3f;
  auto check_param = [&](float* p, float bp, const char* what, int index) {
    const float saved = *p;
    *p = saved + eps;
    const double lp = loss_of(net, batch, truths, w);
    *p = saved - eps;
    const double lm = loss_of(net, batch, truths, w);
    *p = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double tol = 1e-3 * std::max({std::abs(fd), static_cast<double>(std::abs(bp)), 1.0});
    INFO(what, "[", index, "] fd=", fd, " bp=", bp);
    CHECK(std::abs(fd - bp) <= tol);
  };

  int checked = 0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    LayerSpec& L = net.layers[li];
    if (L.kind == LayerKind::kConv) {
      for (std::size_t j = 0; j < L.conv.weights.numel(); ++j, ++checked)
        check_param(&L.conv.weights.data[j], grads[li].conv_w[j], L.name.c_str(),
                    static_cast<int>(j));
      for (std::size_t j = 0; j < L.conv.bias.numel(); ++j, ++checked)
        check_param(&L.conv.bias.data[j], grads[li].conv_b[j], L.name.c_str(),
                    static_cast<int>(j));
    } else if (L.kind == LayerKind::kBatchNorm) {
      for (std::size_t j = 0; j < L.bn.gamma.numel(); ++j, ++checked)
        check_param(&L.bn.gamma.data[j], grads[li].bn_gamma[j], "gamma", static_cast<int>(j));
      for (std::size_t j = 0; j < L.bn.beta.numel(); ++j, ++checked)
        check_param(&L.bn.beta.data[j], grads[li].bn_beta[j], "beta", static_cast<int>(j));
    }
  }
  CHECK(checked > 150); // the whole net is checked
}

TEST_CASE("max pooling routes gradient to the window argmax") {
  Tensor x({1, 1, 2, 2}, {1.0f, 4.0f, 3.0f, 2.0f});
  Tensor gy({1, 1, 1, 1}, {2.5f});
  const Tensor gx = max_pool2d_backward(gy, x, 2, 2);
  CHECK(gx[0] == 0.0f);
  CHECK(gx[1] == 2.5f);
  CHECK(gx[2] == 0.0f);
  CHECK(gx[3] == 0.0f);
}

TEST_CASE("train with lr=0 leaves weights unchanged") {
  const auto data = generate_synthetic_dataset(8, 21);
  NetworkGraph net = build_tiny_detector(3, 4, ActivationKind::kQcfs, 3);
  const NetworkGraph before = net;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.0f;
  cfg.activation = ActivationKind::kQcfs;
  cfg.seed = 5;
  const TrainResult r = train(std::move(net), data, {}, cfg);
  REQUIRE(r.curve.size() == 2);
  for (std::size_t i = 0; i < before.layers.size(); ++i) {
    if (before.layers[i].kind != LayerKind::kConv) continue;
    CHECK(std::memcmp(before.layers[i].conv.weights.data.data(),
                      r.net.layers[i].conv.weights.data.data(),
                      before.layers[i].conv.weights.numel() * sizeof(float)) == 0);
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const auto data = generate_synthetic_dataset(12, 31);
  const auto val = generate_synthetic_dataset(4, 32);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.01f;
  cfg.activation = ActivationKind::kQcfs;
  cfg.seed = 11;

  const TrainResult a = train(build_tiny_detector(3, 4, ActivationKind::kQcfs, 11), data, val, cfg);
  const TrainResult b = train(build_tiny_detector(3, 4, ActivationKind::kQcfs, 11), data, val, cfg);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t e = 0; e < a.curve.size(); ++e) {
    CHECK(a.curve[e].total_loss == b.curve[e].total_loss);
    CHECK(a.curve[e].map50 == b.curve[e].map50);
  }
  for (std::size_t i = 0; i < a.net.layers.size(); ++i) {
    if (a.net.layers[i].kind != LayerKind::kConv) continue;
    CHECK(std::memcmp(a.net.layers[i].conv.weights.data.data(),
                      b.net.layers[i].conv.weights.data.data(),
                      a.net.layers[i].conv.weights.numel() * sizeof(float)) == 0);
  }
}

TEST_CASE("parallel training gradients equal the single-thread reference") {
  const auto data = generate_synthetic_dataset(8, 41);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.01f;
  cfg.activation = ActivationKind::kLeakyRelu;
  cfg.seed = 13;

  set_num_threads(1);
  const TrainResult ref = train(build_tiny_detector(3, 4, ActivationKind::kLeakyRelu, 13), data,
                                {}, cfg);
  set_num_threads(2);
  const TrainResult par = train(build_tiny_detector(3, 4, ActivationKind::kLeakyRelu, 13), data,
                                {}, cfg);
  set_num_threads(1);
  for (std::size_t i = 0; i < ref.net.layers.size(); ++i) {
    if (ref.net.layers[i].kind != LayerKind::kConv) continue;
    const auto& wa = ref.net.layers[i].conv.weights;
    const auto& wb = par.net.layers[i].conv.weights;
    for (std::size_t j = 0; j < wa.numel(); ++j)
      CHECK(std::abs(wa[j] - wb[j]) <= 1e-6f * std::max(1.0f, std::abs(wa[j])));
  }
}

TEST_CASE("diverging training aborts with a structured error") {
  const auto data = generate_synthetic_dataset(16, 51);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e18f; // overflow the float range within a few batches
  cfg.activation = ActivationKind::kLeakyRelu;
  cfg.seed = 3;
  CHECK_THROWS_AS(
      train(build_tiny_detector(3, 4, ActivationKind::kLeakyRelu, 3), data, {}, cfg),
      TrainDivergedError);
}

TEST_CASE("train validates the activation kind against the config") {
  const auto data = generate_synthetic_dataset(4, 61);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.activation = ActivationKind::kQcfs;
  CHECK_THROWS_AS(train(build_tiny_detector(3, 4, ActivationKind::kLeakyRelu, 3), data, {}, cfg),
                  std::invalid_argument);

  // IF nets cannot be trained at all
  NetworkGraph net = build_tiny_detector(3, 4, ActivationKind::kIfNeuron, 3);
  cfg.activation = ActivationKind::kIfNeuron;
  CHECK_THROWS_AS(train(std::move(net), data, {}, cfg), std::invalid_argument);
}
