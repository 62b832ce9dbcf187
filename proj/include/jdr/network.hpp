#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "jdr/asm_relu.hpp"
#include "jdr/jpeg_ops.hpp"
#include "jdr/jpeg_transform.hpp"

namespace jdr {

/// Three residual blocks (conv-bn-relu-conv-bn, add, relu), then global
/// average pooling and a fully connected classifier. Block i runs at
/// strides[i]; with the defaults a 32x32 input ends as one 8x8 block.
struct NetworkSpec {
  static constexpr std::size_t kBlocks = 3;

  PlaneGeometry input{32, 32};
  std::size_t in_channels = 1;
  std::array<std::size_t, kBlocks> channels{16, 32, 64};
  std::array<std::size_t, kBlocks> strides{1, 2, 2};
  std::size_t num_classes = 10;
  std::size_t kernel_size = 3;
  FrequencyBudget budget{FrequencyBudget::kMax};

  /// Geometry entering block i; i == kBlocks gives the final feature map.
  PlaneGeometry stage_geometry(std::size_t i) const;
  std::size_t stage_in_channels(std::size_t i) const { return i == 0 ? in_channels : channels[i - 1]; }
  bool has_projection(std::size_t i) const { return strides[i] != 1 || stage_in_channels(i) != channels[i]; }

  /// Throws GeometryError unless every stage is block aligned and the final
  /// feature map is a single block.
  void validate() const;
};

/// Applied to raw pixels before the first layer: (pixel - mean) / scale.
struct InputNormalization {
  double mean = 0.0;
  double scale = 1.0;
  bool operator==(const InputNormalization&) const = default;
};

enum class Domain { spatial, jpeg };

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

struct NamedTensor {
  std::string name;
  AnyTensor tensor;
};

const Shape& shape_of(const AnyTensor& t);
Tensor<double> as_double(const AnyTensor& t);

/// Ordered named tensors plus the metadata both domains share.
struct ModelWeights {
  Domain domain = Domain::spatial;
  QuantTable quant;
  InputNormalization normalization;
  NetworkSpec spec;  // its budget is the ReLu budget recorded in the metadata
  double bn_epsilon = 1e-5;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  /// Throws ShapeMismatch when missing.
  const AnyTensor& get(const std::string& name) const;
  void set(const std::string& name, AnyTensor t);
};

std::string layer_name(std::size_t block, const std::string& layer);  // "block1.conv1"

/// Spatial-domain parameters of one residual block.
struct ResidualBlockWeights {
  Tensor<double> conv1;
  BatchNormParams bn1;
  Tensor<double> conv2;
  BatchNormParams bn2;
  std::optional<Tensor<double>> projection;
};

ResidualBlockWeights block_weights(const ModelWeights& w, std::size_t block);
BatchNormParams bn_params(const ModelWeights& w, const std::string& prefix);

/// Checks every spatial layer exists with the shape its NetworkSpec implies.
void validate_spatial_weights(const ModelWeights& w);

/// He-normal convolutions, mildly perturbed batch norm statistics, small FC.
ModelWeights random_spatial_weights(const NetworkSpec& spec, std::uint64_t seed);

/// Every tensor zero except batch norm variances (1) and gamma (1).
ModelWeights zero_spatial_weights(const NetworkSpec& spec);

}  // namespace jdr
