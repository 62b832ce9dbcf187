#include <doctest.h>

#include <cmath>
#include <random>

#include "jdr/spatial_ref.hpp"

using jdr::Shape;
using jdr::Tensor;

namespace {

jdr::NetworkSpec single_block_spec() {
  jdr::NetworkSpec spec;
  spec.input = {8, 8};
  spec.channels = {1, 1, 1};
  spec.strides = {1, 1, 1};
  spec.kernel_size = 1;
  spec.num_classes = 2;
  return spec;
}

}  // namespace

TEST_CASE("relu, gap and add") {
  const Tensor<double> x({1, 1, 1, 2}, {-2.0, 3.0});
  const auto r = jdr::spatial_relu(x);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 3.0);
  const auto g = jdr::spatial_gap(Tensor<double>({2, 3, 4, 5}, 1.25));
  CHECK(g.shape() == Shape{2, 3});
  for (double v : g.data()) CHECK(v == 1.25);
  const auto s = jdr::spatial_add(x, r);
  CHECK(s[0] == -2.0);
  CHECK(s[1] == 6.0);
  CHECK_THROWS_AS(jdr::spatial_add(x, Tensor<double>({1, 1, 2, 1})), jdr::ShapeMismatch);
}

TEST_CASE("identity kernels leave the input alone") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor<double> x({2, 2, 8, 8});
  for (auto& v : x.data()) v = dist(rng);
  Tensor<double> center({2, 2, 3, 3});
  center.at({0, 0, 1, 1}) = 1.0;
  center.at({1, 1, 1, 1}) = 1.0;
  CHECK(jdr::spatial_conv(x, center, 1) == x);
  Tensor<double> point({2, 2, 1, 1});
  point.at({0, 0, 0, 0}) = 1.0;
  point.at({1, 1, 0, 0}) = 1.0;
  CHECK(jdr::spatial_conv(x, point, 1) == x);
  const auto strided = jdr::spatial_conv(x, point, 2);
  CHECK(strided.shape() == Shape{2, 2, 4, 4});
  CHECK(strided.at({1, 0, 3, 2}) == x.at({1, 0, 6, 4}));
  CHECK_THROWS_AS(jdr::spatial_conv(x, Tensor<double>({1, 3, 3, 3}), 1), jdr::ShapeMismatch);
}

TEST_CASE("hand-worked 2x2 trace") {
  // image  1 2    kernel 0 1  0    conv -3  4   bn(x) = x - 2   relu 0  2
  //        3 4           2 1  0          4 12                        2 10
  //                      0 0 -1
  // gap 3.5; fc [2, -1] + [0.5, 1] -> [7.5, -2.5]
  const Tensor<double> image({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor<double> kernel({1, 1, 3, 3}, {0, 1, 0, 2, 1, 0, 0, 0, -1});
  const auto conv = jdr::spatial_conv(image, kernel, 1);
  CHECK(conv == Tensor<double>({1, 1, 2, 2}, {-3, 4, 4, 12}));
  CHECK(jdr::spatial_conv(image, kernel, 2) == Tensor<double>({1, 1, 1, 1}, {-3}));

  jdr::BatchNormParams bn;
  bn.gamma = {2.0};
  bn.beta = {-1.0};
  bn.running_mean = {1.0};
  bn.running_var = {3.0};
  bn.epsilon = 1.0;
  const auto normed = jdr::spatial_batchnorm(conv, std::as_const(bn));
  CHECK(normed == Tensor<double>({1, 1, 2, 2}, {-5, 2, 2, 10}));
  const auto act = jdr::spatial_relu(normed);
  const auto pooled = jdr::spatial_gap(act);
  CHECK(pooled[0] == 3.5);
  const auto logits = jdr::spatial_fc(pooled, Tensor<double>({2, 1}, {2, -1}), Tensor<double>({2}, {0.5, 1}));
  CHECK(logits.shape() == Shape{1, 2});
  CHECK(logits[0] == 7.5);
  CHECK(logits[1] == -2.5);
}

TEST_CASE("train-mode batch norm uses batch statistics") {
  // values 1..8 in one channel: mean 4.5, biased variance 5.25, unbiased 6
  Tensor<double> x({2, 1, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto bn = jdr::BatchNormParams::identity(1);
  bn.epsilon = 1e-12;
  const auto y = jdr::spatial_batchnorm(x, bn, jdr::BatchNormMode::train);
  CHECK(y[0] == doctest::Approx(-3.5 / std::sqrt(5.25)).epsilon(1e-12));
  CHECK(bn.running_mean[0] == doctest::Approx(0.45));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.6));
  CHECK_THROWS_AS(jdr::spatial_batchnorm(Tensor<double>({1, 2, 2, 2}), bn, jdr::BatchNormMode::train),
                  jdr::ShapeMismatch);
}

TEST_CASE("zero weights give the classifier bias") {
  auto w = jdr::zero_spatial_weights(jdr::NetworkSpec{});
  w.set("fc.bias", Tensor<double>({10}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Tensor<double> x({3, 1, 32, 32}, 77.0);
  const auto logits = jdr::spatial_forward(w, x);
  CHECK(logits.shape() == Shape{3, 10});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 10; ++c) CHECK(logits.at({i, c}) == static_cast<double>(c));
}

TEST_CASE("identity network passes a positive constant through") {
  auto w = jdr::zero_spatial_weights(single_block_spec());
  for (std::size_t b = 0; b < 3; ++b) {
    w.set(jdr::layer_name(b, "conv1.weight"), Tensor<double>({1, 1, 1, 1}, 1.0));
    w.set(jdr::layer_name(b, "bn1.running_var"), Tensor<double>({1}, 1.0 - w.bn_epsilon));
  }
  w.set("fc.weight", Tensor<double>({2, 1}, {1.0, -1.0}));
  const auto logits = jdr::spatial_forward(w, Tensor<double>({1, 1, 8, 8}, 2.5));
  CHECK(logits[0] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(logits[1] == doctest::Approx(-2.5).epsilon(1e-14));
}

TEST_CASE("forward is deterministic and validates its input") {
  const auto w = jdr::random_spatial_weights(jdr::NetworkSpec{}, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dist(0.0, 255.0);
  Tensor<double> x({2, 1, 32, 32});
  for (auto& v : x.data()) v = dist(rng);
  CHECK(jdr::spatial_forward(w, x) == jdr::spatial_forward(w, x));
  CHECK_THROWS_AS(jdr::spatial_forward(w, Tensor<double>({1, 1, 16, 16})), jdr::ShapeMismatch);
  CHECK_THROWS_AS(jdr::spatial_forward(w, Tensor<double>({1, 3, 32, 32})), jdr::ShapeMismatch);
}
