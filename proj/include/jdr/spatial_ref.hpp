#pragma once

#include "jdr/jpeg_ops.hpp"
#include "jdr/network.hpp"
#include "jdr/tensor.hpp"

namespace jdr {

// Pixel-domain reference network. Plain loops, no threading; every
// compressed-domain operation is checked against these.
//
// Feature tensors are (batch, channels, height, width).

template <typename T>
Tensor<T> spatial_conv(const Tensor<T>& x, const Tensor<double>& kernel, std::size_t stride);

template <typename T>
Tensor<T> spatial_batchnorm(const Tensor<T>& x, BatchNormParams& params, BatchNormMode mode);

template <typename T>
Tensor<T> spatial_batchnorm(const Tensor<T>& x, const BatchNormParams& params);

template <typename T>
Tensor<T> spatial_relu(const Tensor<T>& x);

template <typename T>
Tensor<T> spatial_add(const Tensor<T>& a, const Tensor<T>& b);

/// (batch, channels) means.
template <typename T>
Tensor<T> spatial_gap(const Tensor<T>& x);

/// features (batch, in) -> (batch, out); weight (out, in), bias (out).
template <typename T>
Tensor<T> spatial_fc(const Tensor<T>& features, const Tensor<double>& weight, const Tensor<double>& bias);

/// Raw pixels in, logits (batch, classes) out. Applies the weights' input
/// normalization first; layer order matches the compressed-domain model.
template <typename T>
Tensor<T> spatial_forward(const ModelWeights& weights, const Tensor<T>& input);

}  // namespace jdr
