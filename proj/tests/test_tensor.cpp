#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "jdr/tensor.hpp"

using jdr::Shape;
using jdr::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// 64x64 orthonormal DCT matrix indexed [pixel][frequency], typed in from the
// cosine formula.
Tensor<double> dct_matrix() {
  Tensor<double> d({64, 64});
  for (int m = 0; m < 8; ++m)
    for (int n = 0; n < 8; ++n)
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          const double va = a == 0 ? 1 / std::sqrt(2.0) : 1.0, vb = b == 0 ? 1 / std::sqrt(2.0) : 1.0;
          d.at({static_cast<std::size_t>(m * 8 + n), static_cast<std::size_t>(a * 8 + b)}) =
              0.25 * va * vb * std::cos((2 * m + 1) * a * std::numbers::pi / 16) *
              std::cos((2 * n + 1) * b * std::numbers::pi / 16);
        }
  return d;
}

}  // namespace

TEST_CASE("default tensor holds one zero") {
  Tensor<float> t;
  CHECK(t.shape() == Shape{1});
  CHECK(t[0] == 0.0f);
}

TEST_CASE("construction validates shape") {
  CHECK_THROWS_AS(Tensor<double>(Shape{}), jdr::RankError);
  CHECK_THROWS_AS(Tensor<double>(Shape{2, 0}), jdr::ShapeMismatch);
  CHECK_THROWS_AS(Tensor<double>(Shape{2, 2}, std::vector<double>(3)), jdr::ShapeMismatch);
  Tensor<double> t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at({1, 2}) == 1.5);
  CHECK_THROWS(t.at({2, 0}));
  CHECK_THROWS(t.at({0}));
  CHECK(t.strides() == std::vector<std::size_t>{3, 1});
}

TEST_CASE("identity contraction returns the vector") {
  const auto eye = jdr::identity_matrix<double>(3);
  Tensor<double> v({3}, {1.0, -2.0, 5.0});
  const auto r = jdr::contract(eye, v, {{1, 0}});
  CHECK(r == v);
}

TEST_CASE("ones times ones") {
  Tensor<double> a({2, 2}, 1.0), b({2, 2}, 1.0);
  const auto r = jdr::contract(a, b, {{1, 0}});
  CHECK(r.shape() == Shape{2, 2});
  for (double v : r.data()) CHECK(v == 2.0);
}

TEST_CASE("full contraction yields shape {1}") {
  Tensor<double> a({2, 3}, 2.0), b({3, 2}, 0.5);
  const auto r = jdr::contract(a, b, {{0, 1}, {1, 0}});
  CHECK(r.shape() == Shape{1});
  CHECK(r[0] == doctest::Approx(6.0));
}

TEST_CASE("DCT matrix times its transpose is the identity") {
  const auto d = dct_matrix();
  const auto r = jdr::contract(d, d, {{0, 0}});
  CHECK(jdr::max_abs_diff(r, jdr::identity_matrix<double>(64)) < 1e-12);
}

TEST_CASE("contraction errors") {
  Tensor<double> a({2, 3}), b({4, 2});
  CHECK_THROWS_AS(jdr::contract(a, b, {{1, 0}}), jdr::ShapeMismatch);
  CHECK_THROWS_AS(jdr::contract(a, b, {{2, 0}}), jdr::RankError);
  CHECK_THROWS_AS(jdr::contract(a, b, {{0, 1}, {0, 1}}), jdr::RankError);
}

TEST_CASE("parallel contraction matches the serial reference") {
  const auto a = random_tensor<double>({5, 7, 6}, 1);
  const auto b = random_tensor<double>({6, 4, 5}, 2);
  const std::vector<jdr::AxisPair> pairs = {{0, 2}, {2, 0}};
  const auto fast = jdr::contract(a, b, pairs);
  const auto slow = jdr::contract_serial(a, b, pairs);
  CHECK(fast.shape() == Shape{7, 4});
  CHECK(jdr::max_abs_diff(fast, slow) < 1e-12);
}

TEST_CASE("result axis order is free axes of a then free axes of b") {
  const auto a = random_tensor<double>({2, 3, 4}, 3);
  const auto b = random_tensor<double>({5, 3}, 4);
  const auto r = jdr::contract(a, b, {{1, 1}});
  REQUIRE(r.shape() == Shape{2, 4, 5});
  double expect = 0.0;
  for (std::size_t j = 0; j < 3; ++j) expect += a.at({1, j, 2}) * b.at({4, j});
  CHECK(r.at({1, 2, 4}) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE_TEMPLATE("contraction is bilinear", T, float, double) {
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-12;
  const auto a = random_tensor<T>({6, 5}, 5), b = random_tensor<T>({6, 5}, 6), c = random_tensor<T>({5, 4}, 7);
  const T alpha = static_cast<T>(1.75);
  Tensor<T> mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a[i] + b[i];
  const auto lhs = jdr::contract(mix, c, {{1, 0}});
  const auto ra = jdr::contract(a, c, {{1, 0}}), rb = jdr::contract(b, c, {{1, 0}});
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double rhs = alpha * static_cast<double>(ra[i]) + rb[i];
    CHECK(std::abs(lhs[i] - rhs) <= tol * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("identity on any single axis is the identity map") {
  const auto x = random_tensor<double>({3, 4, 5}, 8);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const auto eye = jdr::identity_matrix<double>(x.extent(axis));
    auto r = jdr::contract(x, eye, {{axis, 0}});
    // The contracted axis moves to the end; put it back.
    std::vector<std::size_t> order;
    for (std::size_t i = 0, free = 0; i < 3; ++i) order.push_back(i == axis ? 2 : free++);
    r = jdr::permute(r, order);
    CHECK(jdr::max_abs_diff(r, x) == 0.0);
  }
}

TEST_CASE("reshape to the decoder batch layout") {
  Tensor<float> x({4, 4, 64, 32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i % 1000);
  const auto original = x;
  auto batch = jdr::reshape(std::move(x), {1024, 1, 32, 32});
  CHECK(batch.shape() == Shape{1024, 1, 32, 32});
  const auto back = jdr::reshape(std::move(batch), original.shape());
  CHECK(back == original);
}

TEST_CASE("reshape keeps data and rejects wrong counts") {
  const auto x = random_tensor<double>({3, 4}, 9);
  CHECK(jdr::reshape(x, x.shape()) == x);
  CHECK_THROWS_AS(jdr::reshape(x, {5, 2}), jdr::ShapeMismatch);
}

TEST_CASE("permute moves axes") {
  const auto x = random_tensor<double>({2, 3, 4}, 10);
  const auto p = jdr::permute(x, {2, 0, 1});
  REQUIRE(p.shape() == Shape{4, 2, 3});
  CHECK(p.at({3, 1, 2}) == x.at({1, 2, 3}));
  CHECK_THROWS_AS(jdr::permute(x, {0, 0, 1}), jdr::RankError);
}

TEST_CASE_TEMPLATE("gemm kernels agree", T, float, double) {
  const std::size_t m = 37, n = 300, k = 19;
  const auto a = random_tensor<T>({m, k}, 11), b = random_tensor<T>({k, n}, 12);
  Tensor<T> c1({m, n}, T{1}), c2({m, n}, T{1});
  jdr::gemm_accumulate(m, n, k, a.raw(), b.raw(), c1.raw());
  jdr::gemm_accumulate_serial(m, n, k, a.raw(), b.raw(), c2.raw());
  CHECK(jdr::max_abs_diff(c1, c2) < (std::is_same_v<T, float> ? 1e-5 : 1e-13));
}

TEST_CASE("cast round trip") {
  const auto x = random_tensor<double>({4, 4}, 13);
  const auto f = x.cast<float>();
  CHECK(f.shape() == x.shape());
  CHECK(jdr::max_abs_diff(f.cast<double>(), x) < 1e-7);
}
