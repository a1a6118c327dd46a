#include <doctest/doctest.h>

#include <cmath>
#include <random>

#include "evloop/attribution.hpp"
#include "evloop/error.hpp"
#include "support/reference_net.hpp"

using namespace evloop;
using evloop_test::random_conv_net;
using evloop_test::random_tensor;

namespace {

// F(I) = sum w * I over a (2, 3, 3) input.
Network linear_net(std::mt19937_64& rng) {
  Network net({2, 3, 3}, {{"flat", Flatten{}}, {"out", Dense{1}}});
  net.mutable_params(1).weight = random_tensor({1, 18}, rng);
  net.mutable_params(1).bias = Tensor({1}, {0.3f});
  return net;
}

void check_valid(const ExplanationMap& m, std::size_t h, std::size_t w) {
  REQUIRE(m.grid.shape() == Shape{h, w});
  for (Real v : m.grid.values()) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0);
  }
}

AttributionConfig cfg_for(AttributionMethod m) {
  AttributionConfig c;
  c.method = m;
  c.grad_cam_layer = "relu1";
  return c;
}

}  // namespace

TEST_CASE("linear model: saliency and IG have closed forms") {
  std::mt19937_64 rng(1);
  const Network net = linear_net(rng);
  const Tensor x = random_tensor({2, 3, 3}, rng, 0, 1);
  const Tensor& w = net.params(1).weight;

  AttributionConfig c;
  const ExplanationMap sal = saliency(net, x, c);
  for (std::size_t i = 0; i < 9; ++i) CHECK(sal.grid[i] == std::max(std::abs(w[i]), std::abs(w[9 + i])));

  for (std::size_t steps : {1u, 7u, 50u}) {
    c.ig_steps = steps;
    const ExplanationMap ig = integrated_gradients(net, x, c);
    for (std::size_t i = 0; i < 9; ++i) {
      const double want = std::max(std::abs(w[i] * x[i]), std::abs(w[9 + i] * x[9 + i]));
      CHECK(ig.grid[i] == doctest::Approx(want).epsilon(1e-6));
    }
  }
}

TEST_CASE("channel reductions") {
  const Tensor t({2, 1, 2}, {3, -1, -4, 2});
  const Tensor mx = reduce_channels(t, ChannelReduce::max_abs);
  const Tensor mean = reduce_channels(t, ChannelReduce::mean_abs);
  const Tensor l2 = reduce_channels(t, ChannelReduce::l2);
  CHECK(mx[0] == 4);
  CHECK(mx[1] == 2);
  CHECK(mean[0] == doctest::Approx(3.5));
  CHECK(mean[1] == doctest::Approx(1.5));
  CHECK(l2[0] == doctest::Approx(5));
  CHECK(l2[1] == doctest::Approx(std::sqrt(5.0)));
  CHECK(parse_channel_reduce("l2") == ChannelReduce::l2);
  CHECK_THROWS_AS(parse_channel_reduce("max"), LookupError);
}

TEST_CASE("constant-output model gives a zero saliency map") {
  Network net({1, 4, 4}, {{"flat", Flatten{}}, {"out", Dense{1}}});
  net.mutable_params(1).bias = Tensor({1}, {1});
  const ExplanationMap m = saliency(net, Tensor({1, 4, 4}, 0.5f), {});
  for (Real v : m.grid.values()) CHECK(v == 0);
}

TEST_CASE("guided backprop on all-positive nets equals saliency") {
  Network net({1, 6, 6}, {{"conv", Conv2d{2, 3, 1, 1}},
                          {"relu", Relu{}},
                          {"flat", Flatten{}},
                          {"fc", Dense{3}},
                          {"relu2", Relu{}},
                          {"out", Dense{1}}});
  std::mt19937_64 rng(2);
  for (auto& p : net.mutable_all_params()) {
    for (auto& v : p.weight.values()) v = static_cast<Real>(0.05 + 0.5 * std::uniform_real_distribution<>()(rng));
    for (auto& v : p.bias.values()) v = Real(0.01);
  }
  const Tensor x = random_tensor({1, 6, 6}, rng, 0.1, 1);
  CHECK(saliency(net, x, {}).grid == guided_backprop(net, x, {}).grid);
}

TEST_CASE("negative pre-activation at the only ReLU zeroes guided backprop") {
  Network net({1, 2, 2}, {{"flat", Flatten{}}, {"fc", Dense{1}}, {"relu", Relu{}}, {"out", Dense{1}}});
  net.mutable_params(1).weight = Tensor({1, 4}, {1, 1, 1, 1});
  net.mutable_params(1).bias = Tensor({1}, {-10});
  net.mutable_params(3).weight = Tensor({1, 1}, {1});
  net.mutable_params(3).bias = Tensor({1}, {0});
  const ExplanationMap m = guided_backprop(net, Tensor({1, 2, 2}, 1), {});
  for (Real v : m.grid.values()) CHECK(v == 0);
}

TEST_CASE("guided chain on a 4-pixel mixed-sign net, worked by hand") {
  // h = relu(W1 x), y = v . h with W1 = [[1,-1,2,0],[-1,1,0,1],[1,1,1,1]],
  // v = [1,-2,1], x = [1, 0.5, 0.25, 2].
  // pre = [1, 1.5, 3.75] all > 0; upstream at the ReLUs is v.
  // standard grad = v W1 = [1+2+1, -1-2+1, 2+0+1, 0-2+1] = [4,-2,3,-1]
  // guided keeps only units with upstream > 0 (1 and 3):
  //   [1+1, -1+1, 2+1, 0+1] = [2, 0, 3, 1]
  Network net({1, 2, 2}, {{"flat", Flatten{}}, {"fc", Dense{3}}, {"relu", Relu{}}, {"out", Dense{1}}});
  net.mutable_params(1).weight = Tensor({3, 4}, {1, -1, 2, 0, -1, 1, 0, 1, 1, 1, 1, 1});
  net.mutable_params(1).bias = Tensor({3}, {0, 0, 0});
  net.mutable_params(3).weight = Tensor({1, 3}, {1, -2, 1});
  net.mutable_params(3).bias = Tensor({1}, {0});
  const Tensor x({1, 2, 2}, {1, 0.5f, 0.25f, 2});
  const ExplanationMap g = guided_backprop(net, x, {});
  const ExplanationMap s = saliency(net, x, {});
  const Real want_g[] = {2, 0, 3, 1}, want_s[] = {4, 2, 3, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g.grid[i] == want_g[i]);
    CHECK(s.grid[i] == want_s[i]);
  }
}

TEST_CASE("IG of the baseline itself is zero, and baseline shape is checked") {
  std::mt19937_64 rng(3);
  const Network net = random_conv_net(rng);
  const Tensor x = random_tensor(net.input_shape(), rng);
  AttributionConfig c;
  c.ig_baseline = x;
  const ExplanationMap at_baseline = integrated_gradients(net, x, c);
  for (Real v : at_baseline.grid.values()) CHECK(v == 0);
  c.ig_baseline = Tensor({1, 2, 2});
  CHECK_THROWS_AS(integrated_gradients(net, x, c), ShapeError);
  c.ig_baseline.reset();
  c.ig_steps = 0;
  CHECK_THROWS(integrated_gradients(net, x, c));
}

TEST_CASE("Grad-CAM of conv + global average pool is ReLU(f) / (H W)") {
  Network net({1, 3, 3}, {{"conv", Conv2d{1, 1, 1, 0}}, {"gap", GlobalAvgPool{}}});
  net.mutable_params(0).weight = Tensor({1, 1, 1, 1}, {1});
  net.mutable_params(0).bias = Tensor({1}, {0});
  const Tensor x({1, 3, 3}, {1, -2, 3, 0, 5, -1, 2, 2, -3});
  const Tensor coarse = grad_cam_coarse(net, x, "conv");
  for (std::size_t i = 0; i < 9; ++i) CHECK(coarse[i] == doctest::Approx(std::max<Real>(x[i], 0) / 9));

  net.mutable_params(0).weight[0] = -1;
  const Tensor neg = grad_cam_coarse(Network(net), Tensor({1, 3, 3}, 1), "conv");
  for (Real v : neg.values()) CHECK(v == 0);
}

TEST_CASE("Grad-CAM with two maps and hand-set weights") {
  // conv makes f1 = x, f2 = -x (1x1 kernels); head y = a.flatten(f) with
  // weights chosen so the mean gradient of map 1 is 2/9 and of map 2 is 1/9.
  Network net({1, 3, 3}, {{"conv", Conv2d{2, 1, 1, 0}}, {"flat", Flatten{}}, {"out", Dense{1}}});
  net.mutable_params(0).weight = Tensor({2, 1, 1, 1}, {1, -1});
  net.mutable_params(0).bias = Tensor({2}, {0, 0});
  Tensor head({1, 18}, 0);
  head[0] = 2;   // map 1, pixel 0: gradient sum 2
  head[9] = 1;   // map 2, pixel 0: gradient sum 1
  net.mutable_params(2).weight = head;
  net.mutable_params(2).bias = Tensor({1}, {0});
  const Tensor x({1, 3, 3}, {0.9f, -0.3f, 0.6f, 0, 0.3f, -0.9f, 1.2f, -1.5f, 0.15f});
  const Tensor cam = grad_cam_coarse(net, x, "conv");
  // a1 f1 + a2 f2 = (2/9) x - (1/9) x = x / 9
  for (std::size_t i = 0; i < 9; ++i) CHECK(cam[i] == doctest::Approx(std::max<Real>(x[i], 0) / 9));
}

TEST_CASE("Grad-CAM errors and upscaling") {
  std::mt19937_64 rng(4);
  const Network net = random_conv_net(rng);
  const Tensor x = random_tensor(net.input_shape(), rng);
  AttributionConfig c = cfg_for(AttributionMethod::grad_cam);
  c.grad_cam_layer = "missing";
  CHECK_THROWS_AS(grad_cam(net, x, c), LookupError);
  c.grad_cam_layer = "fc1";
  CHECK_THROWS_AS(grad_cam(net, x, c), LookupError);
  c.grad_cam_layer = "relu1";
  check_valid(grad_cam(net, x, c), 8, 8);
}

TEST_CASE("guided Grad-CAM is the product of its factors") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Network net = random_conv_net(rng);
    const Tensor x = random_tensor(net.input_shape(), rng);
    const AttributionConfig c = cfg_for(AttributionMethod::guided_grad_cam);
    const ExplanationMap gg = guided_grad_cam(net, x, c);
    const ExplanationMap g = guided_backprop(net, x, c);
    const ExplanationMap cam = grad_cam(net, x, c);
    for (std::size_t i = 0; i < gg.grid.size(); ++i) CHECK(gg.grid[i] == g.grid[i] * cam.grid[i]);
  }
}

TEST_CASE("every method returns finite nonnegative maps deterministically") {
  std::mt19937_64 rng(6);
  const Network net = random_conv_net(rng, 12);
  const Tensor x = random_tensor(net.input_shape(), rng);
  for (auto m : {AttributionMethod::saliency, AttributionMethod::guided_backprop,
                 AttributionMethod::integrated_gradients, AttributionMethod::grad_cam,
                 AttributionMethod::guided_grad_cam}) {
    CAPTURE(method_name(m));
    const AttributionConfig c = cfg_for(m);
    const ExplanationMap a = attribute(net, x, c);
    check_valid(a, 12, 12);
    CHECK(a.method == m);
    CHECK(attribute(net, x, c).grid == a.grid);
  }
  CHECK_THROWS_AS(saliency(net, Tensor({2, 4, 4}), {}), ShapeError);
  CHECK_THROWS_AS(parse_method("lrp"), LookupError);
  CHECK(parse_method("integrated_gradients") == AttributionMethod::integrated_gradients);
}
