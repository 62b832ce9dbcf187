#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "jdr/tensor.hpp"

namespace jdr {

/// 64 quantization divisors in zigzag order, each in [1, 255].
class QuantTable {
 public:
  /// All-ones table: the transform without quantization loss.
  QuantTable();
  explicit QuantTable(const std::array<std::uint16_t, 64>& zigzag_values);

  static QuantTable ones() { return QuantTable(); }
  /// Standard luminance / chrominance example tables scaled to an IJG quality
  /// factor in [1, 100]; quality 50 is the unscaled table.
  static QuantTable luminance(int quality = 50);
  static QuantTable chrominance(int quality = 50);
  /// Builtin name ("ones", "luma", "chroma", "luma:<q>", "chroma:<q>").
  static QuantTable from_name(const std::string& name);

  std::uint16_t operator[](std::size_t k) const { return q_[k]; }
  const std::array<std::uint16_t, 64>& values() const { return q_; }

  bool operator==(const QuantTable&) const = default;

 private:
  std::array<std::uint16_t, 64> q_;
};

/// Pixel dimensions of one plane; both must be multiples of 8.
struct PlaneGeometry {
  std::size_t height = 8;
  std::size_t width = 8;

  std::size_t block_rows() const { return height / 8; }
  std::size_t block_cols() const { return width / 8; }
  std::size_t blocks() const { return block_rows() * block_cols(); }
  void validate() const;

  bool operator==(const PlaneGeometry&) const = default;
};

/// Natural (row-major 8x8) position of zigzag index k, as row * 8 + col.
const std::array<std::uint8_t, 64>& zigzag_to_natural();
/// Zigzag index of natural position row * 8 + col.
const std::array<std::uint8_t, 64>& natural_to_zigzag();

/// Blocking map of shape (height, width, block_rows, block_cols, 8, 8).
Tensor<double> build_blocking(const PlaneGeometry& geometry);

/// Orthonormal 2-D DCT-II basis D[m, n, alpha, beta]; it is its own inverse
/// when contracted over the opposite index pair.
Tensor<double> build_dct_basis();

/// Zigzag permutation of shape (8, 8, 64).
Tensor<double> build_zigzag();

/// Diagonal (64, 64) maps: `scale` divides position k by q_k, `unscale`
/// multiplies by q_k.
struct QuantScale {
  Tensor<double> scale;
  Tensor<double> unscale;
};
QuantScale build_quant_scale(const QuantTable& quant);

/// Forward map J and inverse map J~ of one plane. Both are stored with the
/// layout (block_rows, block_cols, 64, height, width): the forward map is
/// contracted over its pixel axes, the inverse over its coefficient axes.
struct JpegTransformPair {
  Tensor<double> forward;
  Tensor<double> inverse;
  PlaneGeometry geometry;
  QuantTable quant;
};

Tensor<double> compose_forward(const PlaneGeometry& geometry, const QuantTable& quant);
Tensor<double> compose_inverse(const PlaneGeometry& geometry, const QuantTable& quant);
JpegTransformPair build_transform_pair(const PlaneGeometry& geometry, const QuantTable& quant);

/// Coefficients of one plane: shape (block_rows, block_cols, 64), zigzag order.
using CoefficientPlane = Tensor<double>;

/// Nearest integer, halves rounded away from zero.
double round_coefficient(double v);

/// plane: (height, width) -> (block_rows, block_cols, 64).
CoefficientPlane encode_plane(const Tensor<double>& plane, const JpegTransformPair& pair, bool round);
/// (block_rows, block_cols, 64) -> (height, width). Never rounds.
Tensor<double> decode_plane(const CoefficientPlane& coeffs, const JpegTransformPair& pair);

/// Per-block maps (D, Z, S composed) for planes too large for a dense J.
/// forward is (64 pixels -> 64 coefficients) stored as [pixel][k]; inverse as
/// [k][pixel]. Blocking is a permutation, so results match encode_plane.
struct BlockTransform {
  Tensor<double> forward;  // (64, 64): [m*8+n][k]
  Tensor<double> inverse;  // (64, 64): [k][m*8+n]
  QuantTable quant;
};
BlockTransform build_block_transform(const QuantTable& quant);

CoefficientPlane encode_plane_blockwise(const Tensor<double>& plane, const BlockTransform& t, bool round);
Tensor<double> decode_plane_blockwise(const CoefficientPlane& coeffs, const BlockTransform& t);

}  // namespace jdr
