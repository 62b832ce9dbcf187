#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jdr/jpeg_ops.hpp"
#include "jdr/jpeg_transform.hpp"

namespace jdr {

enum class HuffmanClass : std::uint8_t { dc = 0, ac = 1 };

/// Canonical Huffman table as carried by a DHT segment.
struct HuffmanTable {
  HuffmanClass table_class = HuffmanClass::dc;
  std::uint8_t id = 0;
  std::array<std::uint8_t, 16> counts{};  // number of codes of length 1..16
  std::vector<std::uint8_t> symbols;

  // Decoding tables (JPEG Annex F.2.2.3 layout), filled by build().
  std::array<std::int32_t, 17> max_code{};
  std::array<std::int32_t, 17> val_offset{};
  bool built = false;

  /// Derives the canonical code; throws CorruptStream when the counts do not
  /// describe a prefix-free code or exceed 256 symbols.
  void build();
};

struct ParsedComponent {
  std::uint8_t id = 0;
  std::uint8_t h_samp = 1;
  std::uint8_t v_samp = 1;
  QuantTable quant;
  /// Samples actually present: ceil(image_dim * samp / max_samp).
  std::size_t sample_height = 0;
  std::size_t sample_width = 0;
  /// Blocks covering the component's own sample grid (ceil(dim / 8)).
  std::size_t block_rows = 0;
  std::size_t block_cols = 0;
  /// Quantized coefficients, (block_rows, block_cols, 64) row-major, zigzag
  /// order, absolute DC values.
  std::vector<std::int16_t> coeffs;

  PlaneGeometry geometry() const { return {block_rows * 8, block_cols * 8}; }
  /// Same data as a real-valued (block_rows, block_cols, 64) tensor.
  CoefficientPlane plane() const;
};

struct ParsedJpeg {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint16_t restart_interval = 0;
  std::vector<ParsedComponent> components;

  bool subsampled() const;
};

/// Entropy-decodes a baseline (SOF0, 8-bit, Huffman) JPEG down to its
/// quantized DCT coefficients. No dequantization or IDCT happens here.
ParsedJpeg parse_jpeg(std::span<const std::uint8_t> bytes);

/// Binary P5 / P6 with maxval 255. Returns one (height, width) plane for P5
/// and three for P6: R, G, B, or Y, Cb, Cr (JFIF full-range BT.601, chroma
/// offset by 128) when `to_ycbcr` is set.
std::vector<Tensor<double>> load_pnm(std::span<const std::uint8_t> bytes, bool to_ycbcr = false);

/// Stacks the component planes as a (1, components, rows, cols, 64)
/// activation. Chroma planes carried with their own table are requantized to
/// the first component's table so one table covers every channel.
CoefficientTensor<double> coefficients_for_network(const ParsedJpeg& parsed);

/// Dequantize, inverse DCT, +128 and clamp to [0, 255]; one plane per
/// component, cropped to its sample grid.
std::vector<Tensor<double>> reconstruct_pixels(const ParsedJpeg& parsed);

std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace jdr
