// Times the OpenMP kernels against their serial references and checks that
// both produce the same numbers.

#include <chrono>
#include <cstdio>
#include <random>

#include <omp.h>

#include "jdr/jpeg_ops.hpp"
#include "jdr/tensor.hpp"

namespace {

template <typename F>
double seconds(F&& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

jdr::Tensor<double> random_tensor(jdr::Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  jdr::Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void report(const char* name, double parallel, double serial, double diff) {
  std::printf("%-10s parallel %9.4f ms  serial %9.4f ms  speedup %5.2fx  max diff %.3g\n", name, parallel * 1e3,
              serial * 1e3, serial / parallel, diff);
}

}  // namespace

int main() {
  std::mt19937_64 rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());

  {
    const std::size_t m = 256, n = 256, k = 256;
    const auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    jdr::Tensor<double> c1({m, n}), c2({m, n});
    const double tp = seconds([&] { jdr::gemm_accumulate(m, n, k, a.raw(), b.raw(), c1.raw()); }, 5);
    const double ts = seconds([&] { jdr::gemm_accumulate_serial(m, n, k, a.raw(), b.raw(), c2.raw()); }, 5);
    c1 = jdr::Tensor<double>({m, n});
    c2 = jdr::Tensor<double>({m, n});
    jdr::gemm_accumulate(m, n, k, a.raw(), b.raw(), c1.raw());
    jdr::gemm_accumulate_serial(m, n, k, a.raw(), b.raw(), c2.raw());
    report("gemm", tp, ts, jdr::max_abs_diff(c1, c2));
  }

  {
    const auto a = random_tensor({16, 12, 20}, rng), b = random_tensor({20, 16, 9}, rng);
    const jdr::AxisPair pairs[] = {{0, 1}, {2, 0}};
    jdr::Tensor<double> r1, r2;
    const double tp = seconds([&] { r1 = jdr::contract(a, b, pairs); }, 5);
    const double ts = seconds([&] { r2 = jdr::contract_serial(a, b, pairs); }, 5);
    report("contract", tp, ts, jdr::max_abs_diff(r1, r2));
  }

  {
    const std::size_t in_ch = 8, out_ch = 8;
    const auto kernel = random_tensor({out_ch, in_ch, 3, 3}, rng);
    const auto quant = jdr::QuantTable::ones();
    const auto map = jdr::build_conv_map(kernel, {32, 32}, 1, quant, quant);
    const jdr::CoefficientTensor<double> x(random_tensor({4, in_ch, 4, 4, 64}, rng), quant);
    jdr::CoefficientTensor<double> y1, y2;
    const double tp = seconds([&] { y1 = jdr::apply_conv(map, x); }, 3);
    const double ts = seconds([&] { y2 = jdr::apply_conv_serial(map, x); }, 3);
    report("apply_conv", tp, ts, jdr::max_abs_diff(y1.data, y2.data));
  }
  return 0;
}
