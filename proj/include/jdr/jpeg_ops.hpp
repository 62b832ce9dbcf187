#pragma once

#include <vector>

#include "jdr/jpeg_transform.hpp"
#include "jdr/tensor.hpp"

namespace jdr {

/// Network activation in the JPEG transform domain:
/// (batch, channels, block_rows, block_cols, 64), one table for all channels.
template <typename T>
struct CoefficientTensor {
  Tensor<T> data{Shape{1, 1, 1, 1, 64}};
  QuantTable quant;

  CoefficientTensor() = default;
  CoefficientTensor(Tensor<T> d, QuantTable q);

  std::size_t batch() const { return data.extent(0); }
  std::size_t channels() const { return data.extent(1); }
  std::size_t block_rows() const { return data.extent(2); }
  std::size_t block_cols() const { return data.extent(3); }
  PlaneGeometry geometry() const { return {block_rows() * 8, block_cols() * 8}; }

  template <typename U>
  CoefficientTensor<U> cast() const {
    return {data.template cast<U>(), quant};
  }
};

/// Precomputed compressed-domain convolution.
///
/// A zero-padded convolution only couples an output block with the input
/// blocks its receptive field touches, and the coupling depends only on the
/// offset between them. The map is therefore stored once per offset:
/// xi[dr, dc, in_ch, k, out_ch, k'] is the weight from coefficient k of input
/// block (stride * r' + row_lo + dr, stride * c' + col_lo + dc) to
/// coefficient k' of output block (r', c'). to_dense() expands it into the
/// full (in_ch, R, C, 64, out_ch, R', C', 64) operator.
template <typename T>
struct ConvMap {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  PlaneGeometry in_geometry;
  PlaneGeometry out_geometry;
  QuantTable in_quant;
  QuantTable out_quant;
  int row_lo = 0, row_hi = 0;
  int col_lo = 0, col_hi = 0;
  Tensor<T> xi;
  Tensor<double> kernel;  // (out_ch, in_ch, kh, kw) source weights

  std::size_t row_offsets() const { return static_cast<std::size_t>(row_hi - row_lo + 1); }
  std::size_t col_offsets() const { return static_cast<std::size_t>(col_hi - col_lo + 1); }

  Tensor<T> to_dense() const;

  template <typename U>
  ConvMap<U> cast() const {
    ConvMap<U> out;
    out.in_channels = in_channels;
    out.out_channels = out_channels;
    out.stride = stride;
    out.kernel_h = kernel_h;
    out.kernel_w = kernel_w;
    out.in_geometry = in_geometry;
    out.out_geometry = out_geometry;
    out.in_quant = in_quant;
    out.out_quant = out_quant;
    out.row_lo = row_lo;
    out.row_hi = row_hi;
    out.col_lo = col_lo;
    out.col_hi = col_hi;
    out.xi = xi.template cast<U>();
    out.kernel = kernel;
    return out;
  }
};

/// Inclusive range of input-block offsets that can influence an output block,
/// clipped to offsets that actually occur for the given geometries.
struct OffsetWindow {
  int row_lo, row_hi, col_lo, col_hi;
};
OffsetWindow conv_offset_window(const PlaneGeometry& in_geometry, std::size_t stride, std::size_t kernel_h,
                                std::size_t kernel_w);

/// The inverse map viewed as a batch of single-channel basis images:
/// (block_rows * block_cols * 64, 1, height, width).
Tensor<double> explode_decoder(const JpegTransformPair& pair);

/// kernel: (out_ch, in_ch, kh, kw), odd kh and kw; cross-correlation with
/// zero "same" padding; stride 1 or 2.
ConvMap<double> build_conv_map(const Tensor<double>& kernel, const PlaneGeometry& in_geometry, std::size_t stride,
                               const QuantTable& in_quant, const QuantTable& out_quant);

/// Rebuilds the map metadata around an already computed xi tensor (weight
/// files store xi next to the source kernel).
template <typename T>
ConvMap<T> conv_map_from_parts(const Tensor<double>& kernel, const PlaneGeometry& in_geometry, std::size_t stride,
                               const QuantTable& in_quant, const QuantTable& out_quant, Tensor<T> xi);

template <typename T>
CoefficientTensor<T> apply_conv(const ConvMap<T>& map, const CoefficientTensor<T>& x);

/// Unblocked single-threaded version of apply_conv, kept as its reference.
template <typename T>
CoefficientTensor<T> apply_conv_serial(const ConvMap<T>& map, const CoefficientTensor<T>& x);

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  /// gamma = 1, beta = 0, mean = 0, var = 1.
  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
  void validate() const;
};

enum class BatchNormMode { train, eval };

/// Train mode normalizes with batch statistics (mean from the DC terms,
/// variance from the energy of the centered coefficients) and updates the
/// running statistics with the momentum rule, using the unbiased variance.
template <typename T>
CoefficientTensor<T> jpeg_batchnorm(const CoefficientTensor<T>& x, BatchNormParams& params, BatchNormMode mode);

/// Eval mode; params untouched.
template <typename T>
CoefficientTensor<T> jpeg_batchnorm(const CoefficientTensor<T>& x, const BatchNormParams& params);

template <typename T>
CoefficientTensor<T> jpeg_add(const CoefficientTensor<T>& a, const CoefficientTensor<T>& b);

/// (batch, channels) channel means read from the DC terms.
template <typename T>
Tensor<T> global_avg_pool(const CoefficientTensor<T>& x);

/// Same activation expressed against another quantization table.
template <typename T>
CoefficientTensor<T> requantize(const CoefficientTensor<T>& x, const QuantTable& quant);

/// Pixelwise x * scale + shift carried out on the coefficients.
template <typename T>
CoefficientTensor<T> affine(const CoefficientTensor<T>& x, double scale, double shift);

}  // namespace jdr
