#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jdr/asm_relu.hpp"
#include "jdr/jpeg_ops.hpp"
#include "jdr/network.hpp"

namespace jdr {

enum class ReluVariant { asm_mask, apx };

/// Residual network whose every layer acts on JPEG coefficients.
template <typename T>
struct JpegModel {
  struct Block {
    ConvMap<T> conv1;
    BatchNormParams bn1;
    ConvMap<T> conv2;
    BatchNormParams bn2;
    std::optional<ConvMap<T>> projection;
  };

  NetworkSpec spec;
  QuantTable quant;
  InputNormalization normalization;
  std::vector<Block> blocks;
  Tensor<double> fc_weight;
  Tensor<double> fc_bias;
  HarmonicMixingTensor<T> mixing;
  ApproxDecoder<T> approx;
  ReluVariant relu = ReluVariant::asm_mask;

  /// Rebinds every ReLu layer to a new frequency budget; maps are reused.
  void set_budget(const FrequencyBudget& budget);
  const FrequencyBudget& budget() const { return spec.budget; }
};

/// Precomputes every convolution as a ConvMap (built in double, then cast),
/// carries batch norm and FC parameters over unchanged.
template <typename T>
JpegModel<T> convert_model(const ModelWeights& spatial, const QuantTable& quant);

/// input: coefficients of raw pixel planes minus `level_shift` (0 for planes
/// encoded in memory, 128 for parsed JPEG files). Any table is accepted; the
/// input is requantized to the model's table first. Returns (batch, classes).
template <typename T>
Tensor<T> forward(const JpegModel<T>& model, const CoefficientTensor<T>& input, double level_shift = 0.0);

/// Normalized, requantized network input.
template <typename T>
CoefficientTensor<T> prepare_input(const JpegModel<T>& model, const CoefficientTensor<T>& input, double level_shift);

/// Jpeg-domain container: source kernels plus their xi tensors (as T).
template <typename T>
ModelWeights to_weights(const JpegModel<T>& model);

/// Accepts either domain; spatial weights are converted on the way in.
template <typename T>
JpegModel<T> jpeg_model_from_weights(const ModelWeights& weights);

/// Weight file: "JDRN", u16 version, u32 entry count, entries (u32 name
/// length, UTF-8 name, u8 dtype (0 = f32, 1 = f64), u32 rank, u64 extents,
/// raw little-endian row-major data), then u32 length + JSON metadata.
inline constexpr std::uint16_t kWeightsVersion = 1;

std::vector<std::uint8_t> save_weights(const ModelWeights& weights);
ModelWeights load_weights(std::span<const std::uint8_t> bytes);

void save_weights_file(const ModelWeights& weights, const std::string& path);
ModelWeights load_weights_file(const std::string& path);

}  // namespace jdr
