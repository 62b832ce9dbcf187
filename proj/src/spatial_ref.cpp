#include "jdr/spatial_ref.hpp"

#include <algorithm>
#include <cmath>

namespace jdr {

namespace {

template <typename T>
void check_features(const Tensor<T>& x, const char* op) {
  if (x.rank() != 4) throw ShapeMismatch(std::string(op) + ": expected (batch, channels, height, width)");
}

}  // namespace

template <typename T>
Tensor<T> spatial_conv(const Tensor<T>& x, const Tensor<double>& kernel, std::size_t stride) {
  check_features(x, "spatial_conv");
  if (kernel.rank() != 4 || kernel.extent(1) != x.extent(1))
    throw ShapeMismatch("spatial_conv: kernel " + to_string(kernel.shape()) + " vs input " + to_string(x.shape()));
  if (stride != 1 && stride != 2) throw StrideUnsupported("stride " + std::to_string(stride));
  const std::size_t N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = kernel.extent(0), KH = kernel.extent(2), KW = kernel.extent(3);
  const long pad_h = static_cast<long>(KH / 2), pad_w = static_cast<long>(KW / 2);
  const std::size_t Ho = H / stride, Wo = W / stride;

  Tensor<T> y({N, O, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < KH; ++a)
              for (std::size_t b = 0; b < KW; ++b) {
                const long r = static_cast<long>(stride * i) - pad_h + static_cast<long>(a);
                const long q = static_cast<long>(stride * j) - pad_w + static_cast<long>(b);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += static_cast<double>(x[((n * C + c) * H + static_cast<std::size_t>(r)) * W +
                                             static_cast<std::size_t>(q)]) *
                       kernel[((o * C + c) * KH + a) * KW + b];
              }
          y[((n * O + o) * Ho + i) * Wo + j] = static_cast<T>(acc);
        }
  return y;
}

namespace {

template <typename T>
Tensor<T> apply_bn(const Tensor<T>& x, const BatchNormParams& p, const std::vector<double>& mean,
                   const std::vector<double>& var) {
  const std::size_t N = x.extent(0), C = x.extent(1), HW = x.extent(2) * x.extent(3);
  Tensor<T> y(x.shape());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t idx = (n * C + c) * HW + i;
        y[idx] = static_cast<T>((static_cast<double>(x[idx]) - mean[c]) / std::sqrt(var[c] + p.epsilon) * p.gamma[c] +
                                p.beta[c]);
      }
  return y;
}

template <typename T>
void check_bn(const Tensor<T>& x, const BatchNormParams& p) {
  check_features(x, "spatial_batchnorm");
  p.validate();
  if (p.channels() != x.extent(1)) throw ShapeMismatch("spatial_batchnorm: channel count differs");
}

}  // namespace

template <typename T>
Tensor<T> spatial_batchnorm(const Tensor<T>& x, const BatchNormParams& params) {
  check_bn(x, params);
  return apply_bn(x, params, params.running_mean, params.running_var);
}

template <typename T>
Tensor<T> spatial_batchnorm(const Tensor<T>& x, BatchNormParams& params, BatchNormMode mode) {
  check_bn(x, params);
  if (mode == BatchNormMode::eval) return apply_bn(x, params, params.running_mean, params.running_var);

  const std::size_t N = x.extent(0), C = x.extent(1), HW = x.extent(2) * x.extent(3);
  const double count = static_cast<double>(N * HW);
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < HW; ++i) mean[c] += static_cast<double>(x[(n * C + c) * HW + i]);
    mean[c] /= count;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < HW; ++i) {
        const double d = static_cast<double>(x[(n * C + c) * HW + i]) - mean[c];
        var[c] += d * d;
      }
    var[c] /= count;
  }
  auto y = apply_bn(x, params, mean, var);
  for (std::size_t c = 0; c < C; ++c) {
    const double unbiased = count > 1.0 ? var[c] * count / (count - 1.0) : var[c];
    params.running_mean[c] = (1.0 - params.momentum) * params.running_mean[c] + params.momentum * mean[c];
    params.running_var[c] = (1.0 - params.momentum) * params.running_var[c] + params.momentum * unbiased;
  }
  return y;
}

template <typename T>
Tensor<T> spatial_relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> spatial_add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("spatial_add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
Tensor<T> spatial_gap(const Tensor<T>& x) {
  check_features(x, "spatial_gap");
  const std::size_t N = x.extent(0), C = x.extent(1), HW = x.extent(2) * x.extent(3);
  Tensor<T> y({N, C});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < HW; ++i) acc += static_cast<double>(x[(n * C + c) * HW + i]);
      y[n * C + c] = static_cast<T>(acc / static_cast<double>(HW));
    }
  return y;
}

template <typename T>
Tensor<T> spatial_fc(const Tensor<T>& features, const Tensor<double>& weight, const Tensor<double>& bias) {
  if (features.rank() != 2 || weight.rank() != 2 || weight.extent(1) != features.extent(1) ||
      bias.size() != weight.extent(0))
    throw ShapeMismatch("spatial_fc: features " + to_string(features.shape()) + ", weight " +
                        to_string(weight.shape()) + ", bias " + to_string(bias.shape()));
  const std::size_t N = features.extent(0), I = features.extent(1), O = weight.extent(0);
  Tensor<T> y({N, O});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < I; ++i) acc += static_cast<double>(features[n * I + i]) * weight[o * I + i];
      y[n * O + o] = static_cast<T>(acc);
    }
  return y;
}

template <typename T>
Tensor<T> spatial_forward(const ModelWeights& weights, const Tensor<T>& input) {
  validate_spatial_weights(weights);
  const auto& spec = weights.spec;
  check_features(input, "spatial_forward");
  if (input.extent(1) != spec.in_channels || input.extent(2) != spec.input.height ||
      input.extent(3) != spec.input.width)
    throw ShapeMismatch("spatial_forward: input " + to_string(input.shape()) + " does not match the network");

  Tensor<T> x(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    x[i] = static_cast<T>((static_cast<double>(input[i]) - weights.normalization.mean) / weights.normalization.scale);

  for (std::size_t b = 0; b < NetworkSpec::kBlocks; ++b) {
    const auto bw = block_weights(weights, b);
    auto y = spatial_conv(x, bw.conv1, spec.strides[b]);
    y = spatial_relu(spatial_batchnorm(y, bw.bn1));
    y = spatial_batchnorm(spatial_conv(y, bw.conv2, 1), bw.bn2);
    const auto skip = bw.projection ? spatial_conv(x, *bw.projection, spec.strides[b]) : x;
    x = spatial_relu(spatial_add(y, skip));
  }
  return spatial_fc(spatial_gap(x), as_double(weights.get("fc.weight")), as_double(weights.get("fc.bias")));
}

#define JDR_INSTANTIATE(T)                                                                    \
  template Tensor<T> spatial_conv(const Tensor<T>&, const Tensor<double>&, std::size_t);     \
  template Tensor<T> spatial_batchnorm(const Tensor<T>&, BatchNormParams&, BatchNormMode);   \
  template Tensor<T> spatial_batchnorm(const Tensor<T>&, const BatchNormParams&);            \
  template Tensor<T> spatial_relu(const Tensor<T>&);                                         \
  template Tensor<T> spatial_add(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> spatial_gap(const Tensor<T>&);                                          \
  template Tensor<T> spatial_fc(const Tensor<T>&, const Tensor<double>&, const Tensor<double>&); \
  template Tensor<T> spatial_forward(const ModelWeights&, const Tensor<T>&);

JDR_INSTANTIATE(float)
JDR_INSTANTIATE(double)

#undef JDR_INSTANTIATE

}  // namespace jdr
