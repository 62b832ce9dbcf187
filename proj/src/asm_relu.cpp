#include "jdr/asm_relu.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace jdr {

FrequencyBudget::FrequencyBudget(int n_freqs) : n_(n_freqs) {
  if (n_freqs < 1 || n_freqs > kMax)
    throw InvalidArgument("frequency budget " + std::to_string(n_freqs) + " outside [1, 15]");
}

bool FrequencyBudget::keeps(std::size_t k) const {
  const auto nat = zigzag_to_natural()[k];
  return contains(nat / 8, nat % 8);
}

std::size_t FrequencyBudget::coefficient_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < 64; ++k) n += keeps(k) ? 1 : 0;
  return n;
}

template <typename T>
void HarmonicMixingTensor<T>::bind(const T* coeffs, T* bound) const {
  std::fill(bound, bound + 64 * 64, T{0});
  for (std::size_t k = 0; k < 64; ++k) {
    const T c = coeffs[k];
    if (c == T{0}) continue;
    const T* slab = h.raw() + k * 64 * 64;
    for (std::size_t j = 0; j < 64 * 64; ++j) bound[j] += c * slab[j];
  }
}

template <typename T>
void HarmonicMixingTensor<T>::apply_bound(const T* bound, const std::uint8_t* mask, T* out) {
  std::fill(out, out + 64, T{0});
  for (std::size_t p = 0; p < 64; ++p) {
    if (!mask[p]) continue;
    const T* row = bound + p * 64;
    for (std::size_t k = 0; k < 64; ++k) out[k] += row[k];
  }
}

template <typename T>
void HarmonicMixingTensor<T>::apply(const T* coeffs, const std::uint8_t* mask, T* out) const {
  std::array<T, 64 * 64> bound;
  bind(coeffs, bound.data());
  apply_bound(bound.data(), mask, out);
}

HarmonicMixingTensor<double> build_harmonic_mixing(const QuantTable& quant) {
  const auto scales = build_quant_scale(quant);
  const auto dz = contract(build_dct_basis(), build_zigzag(), {{2, 0}, {3, 1}});  // m n g
  const auto dec = contract(scales.unscale, dz, {{1, 2}});                          // k m n
  const auto enc = contract(dz, scales.scale, {{2, 0}});                            // m n k'

  // H[k, m, n, k'] = dec[k, m, n] * enc[m, n, k']; (m, n) is shared, not summed.
  HarmonicMixingTensor<double> out;
  out.quant = quant;
  for (std::size_t k = 0; k < 64; ++k)
    for (std::size_t p = 0; p < 64; ++p) {
      const double d = dec[k * 64 + p];
      for (std::size_t k2 = 0; k2 < 64; ++k2) out.h[(k * 64 + p) * 64 + k2] = d * enc[p * 64 + k2];
    }
  return out;
}

template <typename T>
void ApproxDecoder<T>::decode(const T* coeffs, T* pixels) const {
  std::fill(pixels, pixels + 64, T{0});
  for (std::size_t k = 0; k < 64; ++k) {
    const T c = coeffs[k];
    if (c == T{0}) continue;
    const T* row = matrix.raw() + k * 64;
    for (std::size_t p = 0; p < 64; ++p) pixels[p] += c * row[p];
  }
}

ApproxDecoder<double> build_approx_decoder(const FrequencyBudget& budget, const QuantTable& quant) {
  auto t = build_block_transform(quant);
  for (std::size_t k = 0; k < 64; ++k)
    if (!budget.keeps(k))
      for (std::size_t p = 0; p < 64; ++p) t.inverse[k * 64 + p] = 0.0;
  return {std::move(t.inverse), budget, quant};
}

SpatialBlock approx_spatial(const CoefficientBlock& block, const FrequencyBudget& budget, const QuantTable& quant) {
  SpatialBlock out{};
  build_approx_decoder(budget, quant).decode(block.data(), out.data());
  return out;
}

MaskBlock nnm_mask(const SpatialBlock& spatial) {
  MaskBlock m{};
  for (std::size_t p = 0; p < 64; ++p) m[p] = spatial[p] > 0.0 ? 1 : 0;
  return m;
}

template <typename T>
CoefficientTensor<T> asm_relu(const CoefficientTensor<T>& x, const ApproxDecoder<T>& approx,
                              const HarmonicMixingTensor<T>& h) {
  if (!(h.quant == x.quant) || !(approx.quant == x.quant))
    throw QuantMismatch("asm_relu: mixing tensor built for a different table");
  CoefficientTensor<T> out{Tensor<T>(x.data.shape()), x.quant};
  const auto blocks = static_cast<std::ptrdiff_t>(x.data.size() / 64);
#pragma omp parallel
  {
    std::vector<T> bound(64 * 64);
    std::array<T, 64> pixels;
    MaskBlock mask;
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < blocks; ++b) {
      const T* src = x.data.raw() + b * 64;
      approx.decode(src, pixels.data());
      std::size_t on = 0;
      for (std::size_t p = 0; p < 64; ++p) on += mask[p] = pixels[p] > T{0} ? 1 : 0;
      T* dst = out.data.raw() + b * 64;
      // H is the identity under an all-ones mask and zero under an empty one.
      if (on == 64) {
        std::copy_n(src, 64, dst);
      } else if (on != 0) {
        h.bind(src, bound.data());
        HarmonicMixingTensor<T>::apply_bound(bound.data(), mask.data(), dst);
      }
    }
  }
  return out;
}

template <typename T>
CoefficientTensor<T> asm_relu(const CoefficientTensor<T>& x, const FrequencyBudget& budget,
                              const HarmonicMixingTensor<T>& h) {
  if (!(h.quant == x.quant)) throw QuantMismatch("asm_relu: mixing tensor built for a different table");
  const auto approx = build_approx_decoder(budget, x.quant);
  const ApproxDecoder<T> typed{approx.matrix.template cast<T>(), budget, x.quant};
  return asm_relu(x, typed, h);
}

template <typename T>
CoefficientTensor<T> apx_relu(const CoefficientTensor<T>& x, const FrequencyBudget& budget, const QuantTable& quant) {
  if (!(quant == x.quant)) throw QuantMismatch("apx_relu: table differs from the input's");
  const auto approx = build_approx_decoder(budget, quant);
  const auto fwd = build_block_transform(quant).forward;
  CoefficientTensor<T> out{Tensor<T>(x.data.shape()), x.quant};
  const auto blocks = static_cast<std::ptrdiff_t>(x.data.size() / 64);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    std::array<double, 64> in{}, pixels{};
    const T* src = x.data.raw() + b * 64;
    for (std::size_t k = 0; k < 64; ++k) in[k] = static_cast<double>(src[k]);
    approx.decode(in.data(), pixels.data());
    T* dst = out.data.raw() + b * 64;
    for (std::size_t k = 0; k < 64; ++k) {
      double acc = 0.0;
      for (std::size_t p = 0; p < 64; ++p) acc += std::max(pixels[p], 0.0) * fwd[p * 64 + k];
      dst[k] = static_cast<T>(acc);
    }
  }
  return out;
}

Tensor<double> generate_test_blocks(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw InvalidArgument("block count must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Tensor<double> out({count, 8, 8});
  for (std::size_t b = 0; b < count; ++b) {
    std::array<double, 16> small;
    for (auto& v : small) v = uniform(rng);
    double* dst = out.raw() + b * 64;
    for (std::size_t m = 0; m < 8; ++m)
      for (std::size_t n = 0; n < 8; ++n) dst[m * 8 + n] = small[(m / 2) * 4 + n / 2];
  }
  return out;
}

std::vector<ReluErrorRow> relu_error_sweep(const Tensor<double>& spatial_blocks, const QuantTable& quant) {
  if (spatial_blocks.rank() != 3 || spatial_blocks.extent(1) != 8 || spatial_blocks.extent(2) != 8)
    throw ShapeMismatch("expected (count, 8, 8) blocks");
  const std::size_t count = spatial_blocks.extent(0);
  constexpr int kBudgets = FrequencyBudget::kMax;

  const auto transform = build_block_transform(quant);
  const auto h = build_harmonic_mixing(quant);
  std::vector<ApproxDecoder<double>> approx;
  for (int b = 1; b <= kBudgets; ++b) approx.push_back(build_approx_decoder(FrequencyBudget(b), quant));

  // Per-block errors are kept so the final sums run in a fixed order.
  std::vector<double> asm_err(count * kBudgets), apx_err(count * kBudgets);

#pragma omp parallel
  {
    std::vector<double> bound(64 * 64);
#pragma omp for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(count); ++bi) {
      const auto idx = static_cast<std::size_t>(bi);
      const double* x = spatial_blocks.raw() + idx * 64;
      std::array<double, 64> coeffs{}, exact{}, pixels{}, out_coeffs{}, decoded{};
      for (std::size_t p = 0; p < 64; ++p) {
        exact[p] = std::max(x[p], 0.0);
        for (std::size_t k = 0; k < 64; ++k) coeffs[k] += x[p] * transform.forward[p * 64 + k];
      }
      auto decode_full = [&](const std::array<double, 64>& c, std::array<double, 64>& px) {
        for (std::size_t p = 0; p < 64; ++p) {
          double acc = 0.0;
          for (std::size_t k = 0; k < 64; ++k) acc += c[k] * transform.inverse[k * 64 + p];
          px[p] = acc;
        }
      };
      auto rmse = [&](const std::array<double, 64>& px) {
        double s = 0.0;
        for (std::size_t p = 0; p < 64; ++p) s += (px[p] - exact[p]) * (px[p] - exact[p]);
        return std::sqrt(s / 64.0);
      };

      h.bind(coeffs.data(), bound.data());
      for (int b = 0; b < kBudgets; ++b) {
        approx[static_cast<std::size_t>(b)].decode(coeffs.data(), pixels.data());
        MaskBlock mask;
        for (std::size_t p = 0; p < 64; ++p) mask[p] = pixels[p] > 0.0 ? 1 : 0;

        HarmonicMixingTensor<double>::apply_bound(bound.data(), mask.data(), out_coeffs.data());
        decode_full(out_coeffs, decoded);
        asm_err[idx * kBudgets + static_cast<std::size_t>(b)] = rmse(decoded);

        for (std::size_t k = 0; k < 64; ++k) {
          double acc = 0.0;
          for (std::size_t p = 0; p < 64; ++p) acc += std::max(pixels[p], 0.0) * transform.forward[p * 64 + k];
          out_coeffs[k] = acc;
        }
        decode_full(out_coeffs, decoded);
        apx_err[idx * kBudgets + static_cast<std::size_t>(b)] = rmse(decoded);
      }
    }
  }

  std::vector<ReluErrorRow> rows;
  for (int b = 0; b < kBudgets; ++b) {
    double sa = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      sa += asm_err[i * kBudgets + static_cast<std::size_t>(b)];
      sp += apx_err[i * kBudgets + static_cast<std::size_t>(b)];
    }
    rows.push_back({b + 1, sa / static_cast<double>(count), sp / static_cast<double>(count)});
  }
  return rows;
}

#define JDR_INSTANTIATE(T)                                                                                      \
  template struct HarmonicMixingTensor<T>;                                                                      \
  template struct ApproxDecoder<T>;                                                                             \
  template CoefficientTensor<T> asm_relu(const CoefficientTensor<T>&, const FrequencyBudget&,                  \
                                         const HarmonicMixingTensor<T>&);                                       \
  template CoefficientTensor<T> asm_relu(const CoefficientTensor<T>&, const ApproxDecoder<T>&,                 \
                                         const HarmonicMixingTensor<T>&);                                       \
  template CoefficientTensor<T> apx_relu(const CoefficientTensor<T>&, const FrequencyBudget&, const QuantTable&);

JDR_INSTANTIATE(float)
JDR_INSTANTIATE(double)

#undef JDR_INSTANTIATE

}  // namespace jdr
