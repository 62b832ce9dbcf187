#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "jdr/jpeg_ops.hpp"
#include "jdr/jpeg_transform.hpp"

namespace jdr {

/// Number of spatial-frequency diagonals kept when approximating a block:
/// coefficient (alpha, beta) is used iff alpha + beta < n_freqs. 15 keeps all
/// 64 coefficients, 1 keeps only DC.
class FrequencyBudget {
 public:
  static constexpr int kMax = 15;

  explicit FrequencyBudget(int n_freqs = kMax);

  int n_freqs() const { return n_; }
  bool contains(std::size_t alpha, std::size_t beta) const { return static_cast<int>(alpha + beta) < n_; }
  /// Whether zigzag coefficient k is kept.
  bool keeps(std::size_t k) const;
  std::size_t coefficient_count() const;

  bool operator==(const FrequencyBudget&) const = default;

 private:
  int n_;
};

using SpatialBlock = std::array<double, 64>;  // row-major 8x8 pixels
using CoefficientBlock = std::array<double, 64>;  // zigzag order
using MaskBlock = std::array<std::uint8_t, 64>;

/// Bilinear operator H[k, m, n, k'] taking a quantized coefficient block and a
/// spatial 8x8 mask to the quantized coefficients of the masked block.
template <typename T>
struct HarmonicMixingTensor {
  Tensor<T> h{Shape{64, 8, 8, 64}};
  QuantTable quant;

  /// Contracts the coefficient side: result[p * 64 + k'] for pixel p.
  /// Mask-independent, so several masks can reuse it.
  void bind(const T* coeffs, T* bound) const;
  /// out[k'] = sum_p mask[p] * bound[p * 64 + k'].
  static void apply_bound(const T* bound, const std::uint8_t* mask, T* out);
  /// Full application to one block.
  void apply(const T* coeffs, const std::uint8_t* mask, T* out) const;

  template <typename U>
  HarmonicMixingTensor<U> cast() const {
    return {h.template cast<U>(), quant};
  }
};

HarmonicMixingTensor<double> build_harmonic_mixing(const QuantTable& quant);

/// Inverse transform of one block restricted to the budget's coefficients.
SpatialBlock approx_spatial(const CoefficientBlock& block, const FrequencyBudget& budget, const QuantTable& quant);

MaskBlock nnm_mask(const SpatialBlock& spatial);

/// Precomputed truncated inverse (64 x 64, [k][pixel]) for one budget/table;
/// shared by the tensor-level ReLu variants.
template <typename T>
struct ApproxDecoder {
  Tensor<T> matrix{Shape{64, 64}};
  FrequencyBudget budget;
  QuantTable quant;

  void decode(const T* coeffs, T* pixels) const;
};

ApproxDecoder<double> build_approx_decoder(const FrequencyBudget& budget, const QuantTable& quant);

/// ReLu by approximated spatial masking: the mask comes from the budgeted
/// approximation, the masking itself is exact and done through H.
template <typename T>
CoefficientTensor<T> asm_relu(const CoefficientTensor<T>& x, const FrequencyBudget& budget,
                              const HarmonicMixingTensor<T>& h);

/// Variant with a prebuilt truncated decoder (the model caches one per layer).
template <typename T>
CoefficientTensor<T> asm_relu(const CoefficientTensor<T>& x, const ApproxDecoder<T>& approx,
                              const HarmonicMixingTensor<T>& h);

/// Baseline: ReLu evaluated on the approximation itself, then re-encoded.
template <typename T>
CoefficientTensor<T> apx_relu(const CoefficientTensor<T>& x, const FrequencyBudget& budget, const QuantTable& quant);

/// count 8x8 blocks, each a 2x box upsampling of a uniform [-1, 1] 4x4 block.
/// Shape (count, 8, 8); deterministic in seed.
Tensor<double> generate_test_blocks(std::size_t count, std::uint64_t seed);

struct ReluErrorRow {
  int budget;
  double asm_rmse;
  double apx_rmse;
};

/// Mean per-block RMSE of ASM and APX against the exact ReLu, in the spatial
/// domain, for every budget 1..15.
std::vector<ReluErrorRow> relu_error_sweep(const Tensor<double>& spatial_blocks, const QuantTable& quant);

}  // namespace jdr
