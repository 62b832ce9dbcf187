#include "jdr/jpeg_ops.hpp"

#include <algorithm>
#include <cmath>

namespace jdr {

namespace {

template <typename T>
void check_same(const CoefficientTensor<T>& a, const CoefficientTensor<T>& b, const char* op) {
  if (a.data.shape() != b.data.shape())
    throw ShapeMismatch(std::string(op) + ": " + to_string(a.data.shape()) + " vs " + to_string(b.data.shape()));
  if (!(a.quant == b.quant)) throw QuantMismatch(std::string(op) + ": operands use different tables");
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

template <typename T>
CoefficientTensor<T>::CoefficientTensor(Tensor<T> d, QuantTable q) : data(std::move(d)), quant(q) {
  if (data.rank() != 5 || data.extent(4) != 64)
    throw ShapeMismatch("coefficient tensor must be (batch, channels, rows, cols, 64), got " +
                        to_string(data.shape()));
}

OffsetWindow conv_offset_window(const PlaneGeometry& in_geometry, std::size_t stride, std::size_t kernel_h,
                                std::size_t kernel_w) {
  const int s = static_cast<int>(stride);
  auto axis = [&](std::size_t kernel, std::size_t in_blocks) {
    const int pad = static_cast<int>(kernel / 2);
    const int out_blocks = static_cast<int>(in_blocks) / s;
    int lo = floor_div(-pad, 8);
    int hi = floor_div(7 * s + pad, 8);
    lo = std::max(lo, -s * (out_blocks - 1));
    hi = std::min(hi, static_cast<int>(in_blocks) - 1);
    return std::pair{lo, hi};
  };
  const auto [rl, rh] = axis(kernel_h, in_geometry.block_rows());
  const auto [cl, ch] = axis(kernel_w, in_geometry.block_cols());
  return {rl, rh, cl, ch};
}

Tensor<double> explode_decoder(const JpegTransformPair& pair) {
  const auto& g = pair.geometry;
  return reshape(pair.inverse, {g.blocks() * 64, 1, g.height, g.width});
}

namespace {

void validate_conv_args(const Tensor<double>& kernel, const PlaneGeometry& in_geometry, std::size_t stride) {
  if (stride != 1 && stride != 2) throw StrideUnsupported("stride " + std::to_string(stride) + " (supported: 1, 2)");
  if (kernel.rank() != 4) throw ShapeMismatch("kernel must be (out, in, kh, kw)");
  if (kernel.extent(2) % 2 == 0 || kernel.extent(3) % 2 == 0)
    throw GeometryError("kernel size must be odd, got " + to_string(kernel.shape()));
  in_geometry.validate();
  if (in_geometry.height % stride || in_geometry.width % stride)
    throw GeometryError("input plane not divisible by stride");
  PlaneGeometry{in_geometry.height / stride, in_geometry.width / stride}.validate();
}

}  // namespace

template <typename T>
ConvMap<T> conv_map_from_parts(const Tensor<double>& kernel, const PlaneGeometry& in_geometry, std::size_t stride,
                               const QuantTable& in_quant, const QuantTable& out_quant, Tensor<T> xi) {
  validate_conv_args(kernel, in_geometry, stride);
  ConvMap<T> map;
  map.out_channels = kernel.extent(0);
  map.in_channels = kernel.extent(1);
  map.kernel_h = kernel.extent(2);
  map.kernel_w = kernel.extent(3);
  map.stride = stride;
  map.in_geometry = in_geometry;
  map.out_geometry = {in_geometry.height / stride, in_geometry.width / stride};
  map.in_quant = in_quant;
  map.out_quant = out_quant;
  const auto win = conv_offset_window(in_geometry, stride, map.kernel_h, map.kernel_w);
  map.row_lo = win.row_lo;
  map.row_hi = win.row_hi;
  map.col_lo = win.col_lo;
  map.col_hi = win.col_hi;
  const Shape expected{map.row_offsets(), map.col_offsets(), map.in_channels, 64, map.out_channels, 64};
  if (xi.shape() != expected)
    throw ShapeMismatch("conv map tensor " + to_string(xi.shape()) + ", expected " + to_string(expected));
  map.xi = std::move(xi);
  map.kernel = kernel;
  return map;
}

ConvMap<double> build_conv_map(const Tensor<double>& kernel, const PlaneGeometry& in_geometry, std::size_t stride,
                               const QuantTable& in_quant, const QuantTable& out_quant) {
  validate_conv_args(kernel, in_geometry, stride);
  const std::size_t co = kernel.extent(0), ci = kernel.extent(1), kh = kernel.extent(2), kw = kernel.extent(3);
  const PlaneGeometry out_geometry{in_geometry.height / stride, in_geometry.width / stride};
  const auto win = conv_offset_window(in_geometry, stride, kh, kw);
  const std::size_t n_dr = static_cast<std::size_t>(win.row_hi - win.row_lo + 1);
  const std::size_t n_dc = static_cast<std::size_t>(win.col_hi - win.col_lo + 1);

  const auto basis = explode_decoder(build_transform_pair(in_geometry, in_quant));
  const auto forward_out = compose_forward(out_geometry, out_quant);

  const std::size_t H = in_geometry.height, W = in_geometry.width;
  const std::size_t in_cols = in_geometry.block_cols();
  const int pad_h = static_cast<int>(kh / 2), pad_w = static_cast<int>(kw / 2);
  const int s = static_cast<int>(stride);

  Tensor<double> xi({n_dr, n_dc, ci, 64, co, 64});
  const std::size_t offset_stride = ci * 64 * co * 64;

  for (std::size_t dr = 0; dr < n_dr; ++dr)
    for (std::size_t dc = 0; dc < n_dc; ++dc) {
      const int d_row = win.row_lo + static_cast<int>(dr);
      const int d_col = win.col_lo + static_cast<int>(dc);
      // Any (output, input) block pair at this offset gives the same weights;
      // take the first one inside both planes.
      const int out_r = d_row < 0 ? (-d_row + s - 1) / s : 0;
      const int out_c = d_col < 0 ? (-d_col + s - 1) / s : 0;
      const std::size_t in_r = static_cast<std::size_t>(s * out_r + d_row);
      const std::size_t in_c = static_cast<std::size_t>(s * out_c + d_col);

      // Forward map restricted to output block (out_r, out_c): [pixel][k'].
      Tensor<double> j_slice({64, 64});
      for (std::size_t k = 0; k < 64; ++k)
        for (std::size_t p = 0; p < 64; ++p)
          j_slice[p * 64 + k] = forward_out.at({static_cast<std::size_t>(out_r), static_cast<std::size_t>(out_c), k,
                                                static_cast<std::size_t>(out_r) * 8 + p / 8,
                                                static_cast<std::size_t>(out_c) * 8 + p % 8});

#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(ci); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        // Convolved basis images over the output block: rows (k, o), cols pixel.
        std::vector<double> conv(64 * co * 64, 0.0);
        for (std::size_t k = 0; k < 64; ++k) {
          const double* img = basis.raw() + ((in_r * in_cols + in_c) * 64 + k) * H * W;
          for (std::size_t o = 0; o < co; ++o) {
            const double* kern = kernel.raw() + (o * ci + i) * kh * kw;
            double* dst = conv.data() + (k * co + o) * 64;
            for (std::size_t p = 0; p < 64; ++p) {
              const int oy = out_r * 8 + static_cast<int>(p / 8);
              const int ox = out_c * 8 + static_cast<int>(p % 8);
              double acc = 0.0;
              for (std::size_t a = 0; a < kh; ++a) {
                const int y = s * oy - pad_h + static_cast<int>(a);
                if (y < 0 || y >= static_cast<int>(H)) continue;
                for (std::size_t b = 0; b < kw; ++b) {
                  const int x = s * ox - pad_w + static_cast<int>(b);
                  if (x < 0 || x >= static_cast<int>(W)) continue;
                  acc += kern[a * kw + b] * img[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
                }
              }
              dst[p] = acc;
            }
          }
        }
        double* out = xi.raw() + (dr * n_dc + dc) * offset_stride + i * 64 * co * 64;
        gemm_accumulate(64 * co, 64, 64, conv.data(), j_slice.raw(), out);
      }
    }
  return conv_map_from_parts(kernel, in_geometry, stride, in_quant, out_quant, std::move(xi));
}

template <typename T>
Tensor<T> ConvMap<T>::to_dense() const {
  const std::size_t R = in_geometry.block_rows(), C = in_geometry.block_cols();
  const std::size_t Ro = out_geometry.block_rows(), Cout = out_geometry.block_cols();
  Tensor<T> dense({in_channels, R, C, 64, out_channels, Ro, Cout, 64});
  const int s = static_cast<int>(stride);
  for (std::size_t r = 0; r < Ro; ++r)
    for (std::size_t c = 0; c < Cout; ++c)
      for (std::size_t dr = 0; dr < row_offsets(); ++dr)
        for (std::size_t dc = 0; dc < col_offsets(); ++dc) {
          const int ir = s * static_cast<int>(r) + row_lo + static_cast<int>(dr);
          const int ic = s * static_cast<int>(c) + col_lo + static_cast<int>(dc);
          if (ir < 0 || ic < 0 || ir >= static_cast<int>(R) || ic >= static_cast<int>(C)) continue;
          for (std::size_t i = 0; i < in_channels; ++i)
            for (std::size_t k = 0; k < 64; ++k)
              for (std::size_t o = 0; o < out_channels; ++o)
                for (std::size_t k2 = 0; k2 < 64; ++k2)
                  dense.at({i, static_cast<std::size_t>(ir), static_cast<std::size_t>(ic), k, o, r, c, k2}) =
                      xi.at({dr, dc, i, k, o, k2});
        }
  return dense;
}

namespace {

template <typename T>
void check_conv_input(const ConvMap<T>& map, const CoefficientTensor<T>& x) {
  if (x.channels() != map.in_channels || !(x.geometry() == map.in_geometry))
    throw ShapeMismatch("conv input " + to_string(x.data.shape()) + " does not match map (" +
                        std::to_string(map.in_channels) + " channels, " + std::to_string(map.in_geometry.height) +
                        "x" + std::to_string(map.in_geometry.width) + ")");
  if (!(x.quant == map.in_quant)) throw QuantMismatch("conv input table differs from the map's input table");
}

}  // namespace

template <typename T>
CoefficientTensor<T> apply_conv(const ConvMap<T>& map, const CoefficientTensor<T>& x) {
  check_conv_input(map, x);
  const std::size_t N = x.batch();
  const std::size_t R = map.in_geometry.block_rows(), C = map.in_geometry.block_cols();
  const std::size_t Ro = map.out_geometry.block_rows(), Co = map.out_geometry.block_cols();
  const std::size_t K = map.in_channels * 64;
  const std::size_t M = map.out_channels * 64;
  const int s = static_cast<int>(map.stride);

  // Block-major copies: (rows, cols, batch, channel * 64).
  const auto xt = permute(x.data, {2, 3, 0, 1, 4});
  Tensor<T> yt({Ro, Co, N, map.out_channels, 64});

  constexpr std::size_t kTile = 8;
  const std::size_t tiles = (N + kTile - 1) / kTile;
  const std::size_t tasks = Ro * Co * tiles;
  const std::size_t offset_size = K * M;

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t tt = 0; tt < static_cast<std::ptrdiff_t>(tasks); ++tt) {
    const auto task = static_cast<std::size_t>(tt);
    const std::size_t tile = task % tiles;
    const std::size_t ob = task / tiles;
    const std::size_t r = ob / Co, c = ob % Co;
    const std::size_t n0 = tile * kTile, n1 = std::min(N, n0 + kTile);
    T* yrows = yt.raw() + (ob * N + n0) * M;

    for (std::size_t dr = 0; dr < map.row_offsets(); ++dr)
      for (std::size_t dc = 0; dc < map.col_offsets(); ++dc) {
        const int ir = s * static_cast<int>(r) + map.row_lo + static_cast<int>(dr);
        const int ic = s * static_cast<int>(c) + map.col_lo + static_cast<int>(dc);
        if (ir < 0 || ic < 0 || ir >= static_cast<int>(R) || ic >= static_cast<int>(C)) continue;
        const T* xrows = xt.raw() + ((static_cast<std::size_t>(ir) * C + static_cast<std::size_t>(ic)) * N + n0) * K;
        const T* a = map.xi.raw() + (dr * map.col_offsets() + dc) * offset_size;
        for (std::size_t p = 0; p < K; ++p) {
          const T* arow = a + p * M;
          for (std::size_t n = 0; n < n1 - n0; ++n) {
            const T v = xrows[n * K + p];
            if (v == T{0}) continue;
            T* y = yrows + n * M;
            for (std::size_t j = 0; j < M; ++j) y[j] += v * arow[j];
          }
        }
      }
  }
  return {permute(yt, {2, 3, 0, 1, 4}), map.out_quant};
}

template <typename T>
CoefficientTensor<T> apply_conv_serial(const ConvMap<T>& map, const CoefficientTensor<T>& x) {
  check_conv_input(map, x);
  const std::size_t N = x.batch();
  const std::size_t R = map.in_geometry.block_rows(), C = map.in_geometry.block_cols();
  const std::size_t Ro = map.out_geometry.block_rows(), Co = map.out_geometry.block_cols();
  const int s = static_cast<int>(map.stride);
  Tensor<T> y({N, map.out_channels, Ro, Co, 64});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < map.out_channels; ++o)
      for (std::size_t r = 0; r < Ro; ++r)
        for (std::size_t c = 0; c < Co; ++c)
          for (std::size_t k2 = 0; k2 < 64; ++k2) {
            T acc{0};
            for (std::size_t dr = 0; dr < map.row_offsets(); ++dr)
              for (std::size_t dc = 0; dc < map.col_offsets(); ++dc) {
                const int ir = s * static_cast<int>(r) + map.row_lo + static_cast<int>(dr);
                const int ic = s * static_cast<int>(c) + map.col_lo + static_cast<int>(dc);
                if (ir < 0 || ic < 0 || ir >= static_cast<int>(R) || ic >= static_cast<int>(C)) continue;
                for (std::size_t i = 0; i < map.in_channels; ++i)
                  for (std::size_t k = 0; k < 64; ++k)
                    acc += x.data.at({n, i, static_cast<std::size_t>(ir), static_cast<std::size_t>(ic), k}) *
                           map.xi.at({dr, dc, i, k, o, k2});
              }
            y.at({n, o, r, c, k2}) = acc;
          }
  return {std::move(y), map.out_quant};
}

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  return p;
}

void BatchNormParams::validate() const {
  const auto c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c)
    throw ShapeMismatch("batch norm parameter vectors differ in length");
  if (!(epsilon > 0.0)) throw InvalidArgument("batch norm epsilon must be positive");
  for (double v : running_var)
    if (v < 0.0) throw InvalidArgument("negative running variance");
}

namespace {

template <typename T>
CoefficientTensor<T> normalize(const CoefficientTensor<T>& x, const BatchNormParams& params,
                               const std::vector<double>& mean, const std::vector<double>& var) {
  const std::size_t N = x.batch(), P = x.channels(), blocks = x.block_rows() * x.block_cols();
  const double q0 = x.quant[0];
  CoefficientTensor<T> out = x;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < P; ++c) {
      const double scale = params.gamma[c] / std::sqrt(var[c] + params.epsilon);
      const double dc_center = 8.0 * mean[c] / q0;
      const double dc_shift = params.beta[c] * 8.0 / q0;
      T* base = out.data.raw() + (n * P + c) * blocks * 64;
      for (std::size_t b = 0; b < blocks; ++b) {
        T* blk = base + b * 64;
        blk[0] = static_cast<T>((static_cast<double>(blk[0]) - dc_center) * scale + dc_shift);
        for (std::size_t k = 1; k < 64; ++k) blk[k] = static_cast<T>(static_cast<double>(blk[k]) * scale);
      }
    }
  return out;
}

template <typename T>
void check_bn(const CoefficientTensor<T>& x, const BatchNormParams& params) {
  params.validate();
  if (params.channels() != x.channels())
    throw ShapeMismatch("batch norm has " + std::to_string(params.channels()) + " channels, input has " +
                        std::to_string(x.channels()));
}

}  // namespace

template <typename T>
CoefficientTensor<T> jpeg_batchnorm(const CoefficientTensor<T>& x, const BatchNormParams& params) {
  check_bn(x, params);
  return normalize(x, params, params.running_mean, params.running_var);
}

template <typename T>
CoefficientTensor<T> jpeg_batchnorm(const CoefficientTensor<T>& x, BatchNormParams& params, BatchNormMode mode) {
  check_bn(x, params);
  if (mode == BatchNormMode::eval) return normalize(x, params, params.running_mean, params.running_var);

  const std::size_t N = x.batch(), P = x.channels(), blocks = x.block_rows() * x.block_cols();
  const double q0 = x.quant[0];
  const double count = static_cast<double>(N * blocks);
  std::vector<double> mean(P, 0.0), var(P, 0.0);
  for (std::size_t c = 0; c < P; ++c) {
    for (std::size_t n = 0; n < N; ++n) {
      const T* base = x.data.raw() + (n * P + c) * blocks * 64;
      for (std::size_t b = 0; b < blocks; ++b) mean[c] += static_cast<double>(base[b * 64]) * q0 / 8.0;
    }
    mean[c] /= count;
    const double dc_center = 8.0 * mean[c] / q0;
    // Energy of the centered, dequantized orthonormal coefficients.
    for (std::size_t n = 0; n < N; ++n) {
      const T* base = x.data.raw() + (n * P + c) * blocks * 64;
      for (std::size_t b = 0; b < blocks; ++b) {
        const T* blk = base + b * 64;
        double energy = 0.0;
        for (std::size_t k = 0; k < 64; ++k) {
          const double v = (static_cast<double>(blk[k]) - (k == 0 ? dc_center : 0.0)) * x.quant[k];
          energy += v * v;
        }
        var[c] += energy / 64.0;
      }
    }
    var[c] /= count;
  }

  auto out = normalize(x, params, mean, var);
  const double pixels = count * 64.0;
  for (std::size_t c = 0; c < P; ++c) {
    const double unbiased = pixels > 1.0 ? var[c] * pixels / (pixels - 1.0) : var[c];
    params.running_mean[c] = (1.0 - params.momentum) * params.running_mean[c] + params.momentum * mean[c];
    params.running_var[c] = (1.0 - params.momentum) * params.running_var[c] + params.momentum * unbiased;
  }
  return out;
}

template <typename T>
CoefficientTensor<T> jpeg_add(const CoefficientTensor<T>& a, const CoefficientTensor<T>& b) {
  check_same(a, b, "jpeg_add");
  CoefficientTensor<T> out = a;
  auto dst = out.data.data();
  auto src = b.data.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const CoefficientTensor<T>& x) {
  const std::size_t N = x.batch(), P = x.channels(), blocks = x.block_rows() * x.block_cols();
  const double scale = static_cast<double>(x.quant[0]) / 8.0;
  Tensor<T> out({N, P});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < P; ++c) {
      const T* base = x.data.raw() + (n * P + c) * blocks * 64;
      if (blocks == 1) {
        out[n * P + c] = static_cast<T>(static_cast<double>(base[0]) * scale);
        continue;
      }
      double acc = 0.0;
      for (std::size_t b = 0; b < blocks; ++b) acc += static_cast<double>(base[b * 64]);
      out[n * P + c] = static_cast<T>(acc * scale / static_cast<double>(blocks));
    }
  return out;
}

template <typename T>
CoefficientTensor<T> requantize(const CoefficientTensor<T>& x, const QuantTable& quant) {
  if (x.quant == quant) return x;
  std::array<double, 64> factor{};
  for (std::size_t k = 0; k < 64; ++k) factor[k] = static_cast<double>(x.quant[k]) / quant[k];
  CoefficientTensor<T> out{x.data, quant};
  auto d = out.data.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(static_cast<double>(d[i]) * factor[i % 64]);
  return out;
}

template <typename T>
CoefficientTensor<T> affine(const CoefficientTensor<T>& x, double scale, double shift) {
  CoefficientTensor<T> out = x;
  const double dc_shift = shift * 8.0 / x.quant[0];
  auto d = out.data.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    double v = static_cast<double>(d[i]) * scale;
    if (i % 64 == 0) v += dc_shift;
    d[i] = static_cast<T>(v);
  }
  return out;
}

#define JDR_INSTANTIATE(T)                                                                                     \
  template struct CoefficientTensor<T>;                                                                        \
  template struct ConvMap<T>;                                                                                  \
  template ConvMap<T> conv_map_from_parts(const Tensor<double>&, const PlaneGeometry&, std::size_t,            \
                                          const QuantTable&, const QuantTable&, Tensor<T>);                    \
  template CoefficientTensor<T> apply_conv(const ConvMap<T>&, const CoefficientTensor<T>&);                   \
  template CoefficientTensor<T> apply_conv_serial(const ConvMap<T>&, const CoefficientTensor<T>&);            \
  template CoefficientTensor<T> jpeg_batchnorm(const CoefficientTensor<T>&, BatchNormParams&, BatchNormMode); \
  template CoefficientTensor<T> jpeg_batchnorm(const CoefficientTensor<T>&, const BatchNormParams&);          \
  template CoefficientTensor<T> jpeg_add(const CoefficientTensor<T>&, const CoefficientTensor<T>&);           \
  template Tensor<T> global_avg_pool(const CoefficientTensor<T>&);                                            \
  template CoefficientTensor<T> requantize(const CoefficientTensor<T>&, const QuantTable&);                   \
  template CoefficientTensor<T> affine(const CoefficientTensor<T>&, double, double);

JDR_INSTANTIATE(float)
JDR_INSTANTIATE(double)

#undef JDR_INSTANTIATE

}  // namespace jdr
