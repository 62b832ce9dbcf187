#include "jdr/jpeg_transform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace jdr {

namespace {

constexpr std::array<std::uint8_t, 64> kZigzagToNatural = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// Example tables from the JPEG standard, natural order.
constexpr std::array<std::uint16_t, 64> kLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<std::uint16_t, 64> kChrominance = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
    99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

QuantTable scaled_table(const std::array<std::uint16_t, 64>& natural, int quality) {
  if (quality < 1 || quality > 100) throw InvalidArgument("quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<std::uint16_t, 64> zz{};
  for (std::size_t k = 0; k < 64; ++k) {
    const long v = (static_cast<long>(natural[kZigzagToNatural[k]]) * scale + 50) / 100;
    zz[k] = static_cast<std::uint16_t>(std::clamp(v, 1L, 255L));
  }
  return QuantTable(zz);
}

void check_plane(const Tensor<double>& plane, const PlaneGeometry& g) {
  if (plane.rank() != 2 || plane.extent(0) != g.height || plane.extent(1) != g.width)
    throw GeometryError("plane " + to_string(plane.shape()) + " does not match geometry " +
                        std::to_string(g.height) + "x" + std::to_string(g.width));
}

void check_coeffs(const CoefficientPlane& c, const PlaneGeometry& g) {
  if (c.rank() != 3 || c.extent(0) != g.block_rows() || c.extent(1) != g.block_cols() || c.extent(2) != 64)
    throw GeometryError("coefficients " + to_string(c.shape()) + " do not match geometry " +
                        std::to_string(g.height) + "x" + std::to_string(g.width));
}

Tensor<double> compose(const PlaneGeometry& geometry, const Tensor<double>& scale) {
  geometry.validate();
  auto bd = contract(build_blocking(geometry), build_dct_basis(), {{4, 0}, {5, 1}});  // h w R C a b
  auto bdz = contract(bd, build_zigzag(), {{4, 0}, {5, 1}});                         // h w R C g
  auto bdzs = contract(bdz, scale, {{4, 0}});                                        // h w R C k
  return permute(bdzs, {2, 3, 4, 0, 1});
}

}  // namespace

QuantTable::QuantTable() { q_.fill(1); }

QuantTable::QuantTable(const std::array<std::uint16_t, 64>& zigzag_values) : q_(zigzag_values) {
  for (auto v : q_)
    if (v < 1 || v > 255) throw InvalidArgument("quantization value " + std::to_string(v) + " outside [1, 255]");
}

QuantTable QuantTable::luminance(int quality) { return scaled_table(kLuminance, quality); }
QuantTable QuantTable::chrominance(int quality) { return scaled_table(kChrominance, quality); }

QuantTable QuantTable::from_name(const std::string& name) {
  if (name == "ones") return ones();
  auto parse_quality = [&](std::size_t prefix) {
    if (name.size() == prefix) return 50;
    if (name[prefix] != ':') throw ConfigError("unknown quantization table '" + name + "'");
    std::size_t used = 0;
    int q = 0;
    try {
      q = std::stoi(name.substr(prefix + 1), &used);
    } catch (const std::exception&) {
      throw ConfigError("bad quality in '" + name + "'");
    }
    if (used != name.size() - prefix - 1 || q < 1 || q > 100) throw ConfigError("bad quality in '" + name + "'");
    return q;
  };
  if (name.rfind("luma", 0) == 0) return luminance(parse_quality(4));
  if (name.rfind("chroma", 0) == 0) return chrominance(parse_quality(6));
  throw ConfigError("unknown quantization table '" + name + "'");
}

void PlaneGeometry::validate() const {
  if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0)
    throw GeometryError("plane " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not a positive multiple of 8 in both dimensions");
}

const std::array<std::uint8_t, 64>& zigzag_to_natural() { return kZigzagToNatural; }

const std::array<std::uint8_t, 64>& natural_to_zigzag() {
  static const auto table = [] {
    std::array<std::uint8_t, 64> t{};
    for (std::size_t k = 0; k < 64; ++k) t[kZigzagToNatural[k]] = static_cast<std::uint8_t>(k);
    return t;
  }();
  return table;
}

Tensor<double> build_blocking(const PlaneGeometry& geometry) {
  geometry.validate();
  const auto rows = geometry.block_rows(), cols = geometry.block_cols();
  Tensor<double> b({geometry.height, geometry.width, rows, cols, 8, 8});
  for (std::size_t h = 0; h < geometry.height; ++h)
    for (std::size_t w = 0; w < geometry.width; ++w) b.at({h, w, h / 8, w / 8, h % 8, w % 8}) = 1.0;
  return b;
}

Tensor<double> build_dct_basis() {
  const double v0 = 1.0 / std::numbers::sqrt2;
  Tensor<double> d({8, 8, 8, 8});
  for (std::size_t m = 0; m < 8; ++m)
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t a = 0; a < 8; ++a)
        for (std::size_t b = 0; b < 8; ++b) {
          const double va = a == 0 ? v0 : 1.0;
          const double vb = b == 0 ? v0 : 1.0;
          d.at({m, n, a, b}) = 0.25 * va * vb * std::cos((2.0 * m + 1.0) * a * std::numbers::pi / 16.0) *
                               std::cos((2.0 * n + 1.0) * b * std::numbers::pi / 16.0);
        }
  return d;
}

Tensor<double> build_zigzag() {
  Tensor<double> z({8, 8, 64});
  const auto& nat = natural_to_zigzag();
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 8; ++b) z.at({a, b, nat[a * 8 + b]}) = 1.0;
  return z;
}

QuantScale build_quant_scale(const QuantTable& quant) {
  QuantScale s{Tensor<double>({64, 64}), Tensor<double>({64, 64})};
  for (std::size_t k = 0; k < 64; ++k) {
    s.scale.at({k, k}) = 1.0 / quant[k];
    s.unscale.at({k, k}) = static_cast<double>(quant[k]);
  }
  return s;
}

Tensor<double> compose_forward(const PlaneGeometry& geometry, const QuantTable& quant) {
  return compose(geometry, build_quant_scale(quant).scale);
}

Tensor<double> compose_inverse(const PlaneGeometry& geometry, const QuantTable& quant) {
  return compose(geometry, build_quant_scale(quant).unscale);
}

JpegTransformPair build_transform_pair(const PlaneGeometry& geometry, const QuantTable& quant) {
  return {compose_forward(geometry, quant), compose_inverse(geometry, quant), geometry, quant};
}

double round_coefficient(double v) { return std::round(v); }

CoefficientPlane encode_plane(const Tensor<double>& plane, const JpegTransformPair& pair, bool round) {
  check_plane(plane, pair.geometry);
  auto out = contract(pair.forward, plane, {{3, 0}, {4, 1}});
  if (round)
    for (auto& v : out.data()) v = round_coefficient(v);
  return out;
}

Tensor<double> decode_plane(const CoefficientPlane& coeffs, const JpegTransformPair& pair) {
  check_coeffs(coeffs, pair.geometry);
  return contract(coeffs, pair.inverse, {{0, 0}, {1, 1}, {2, 2}});
}

BlockTransform build_block_transform(const QuantTable& quant) {
  const auto scales = build_quant_scale(quant);
  const auto dz = contract(build_dct_basis(), build_zigzag(), {{2, 0}, {3, 1}});  // m n g
  auto fwd = contract(dz, scales.scale, {{2, 0}});                                // m n k
  auto inv = permute(contract(dz, scales.unscale, {{2, 0}}), {2, 0, 1});          // k m n
  return {reshape(std::move(fwd), {64, 64}), reshape(std::move(inv), {64, 64}), quant};
}

CoefficientPlane encode_plane_blockwise(const Tensor<double>& plane, const BlockTransform& t, bool round) {
  if (plane.rank() != 2) throw GeometryError("plane must be rank 2");
  const PlaneGeometry g{plane.extent(0), plane.extent(1)};
  g.validate();
  CoefficientPlane out({g.block_rows(), g.block_cols(), 64});
  const auto nblocks = static_cast<std::ptrdiff_t>(g.blocks());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < nblocks; ++bi) {
    const auto br = static_cast<std::size_t>(bi) / g.block_cols();
    const auto bc = static_cast<std::size_t>(bi) % g.block_cols();
    double* dst = out.raw() + static_cast<std::size_t>(bi) * 64;
    for (std::size_t p = 0; p < 64; ++p) {
      const double v = plane[(br * 8 + p / 8) * g.width + bc * 8 + p % 8];
      const double* row = t.forward.raw() + p * 64;
      for (std::size_t k = 0; k < 64; ++k) dst[k] += v * row[k];
    }
    if (round)
      for (std::size_t k = 0; k < 64; ++k) dst[k] = round_coefficient(dst[k]);
  }
  return out;
}

Tensor<double> decode_plane_blockwise(const CoefficientPlane& coeffs, const BlockTransform& t) {
  if (coeffs.rank() != 3 || coeffs.extent(2) != 64) throw GeometryError("coefficients must be (rows, cols, 64)");
  const PlaneGeometry g{coeffs.extent(0) * 8, coeffs.extent(1) * 8};
  Tensor<double> out({g.height, g.width});
  const auto nblocks = static_cast<std::ptrdiff_t>(g.blocks());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < nblocks; ++bi) {
    const auto br = static_cast<std::size_t>(bi) / g.block_cols();
    const auto bc = static_cast<std::size_t>(bi) % g.block_cols();
    const double* src = coeffs.raw() + static_cast<std::size_t>(bi) * 64;
    for (std::size_t p = 0; p < 64; ++p) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 64; ++k) acc += src[k] * t.inverse[k * 64 + p];
      out[(br * 8 + p / 8) * g.width + bc * 8 + p % 8] = acc;
    }
  }
  return out;
}

}  // namespace jdr
