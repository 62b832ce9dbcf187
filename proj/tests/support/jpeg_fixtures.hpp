#pragma once

// Fixture generation and reference decoding through libjpeg.

#include <cstdint>
#include <string>
#include <vector>

namespace fixture {

enum class Sampling { gray, s444, s420 };

struct EncodeOptions {
  int width = 32;
  int height = 32;
  Sampling sampling = Sampling::gray;
  int quality = 75;
  int restart_interval = 0;  // in MCUs
  std::uint64_t seed = 1;
};

struct Image {
  int width = 0;
  int height = 0;
  int components = 0;
  std::vector<std::uint8_t> samples;  // interleaved
};

// Smooth gradients plus noise, deterministic in seed. Color images are
// produced directly as Y, Cb, Cr samples.
Image synthetic_image(const EncodeOptions& opt);

std::vector<std::uint8_t> encode(const Image& img, const EncodeOptions& opt);
std::vector<std::uint8_t> encode(const EncodeOptions& opt);

// Decoded samples in the file's own color space (no YCbCr -> RGB).
Image reference_decode(const std::vector<std::uint8_t>& jpeg);

struct ReferenceComponent {
  int width_in_blocks = 0;
  int height_in_blocks = 0;
  std::vector<std::int16_t> coeffs;   // (rows, cols, 64), natural order
  std::vector<std::uint16_t> quant;   // natural order
};

// Coefficients as stored, via jpeg_read_coefficients.
std::vector<ReferenceComponent> reference_coefficients(const std::vector<std::uint8_t>& jpeg);

std::vector<std::uint8_t> pgm(int width, int height, const std::vector<std::uint8_t>& samples);
std::vector<std::uint8_t> ppm(int width, int height, const std::vector<std::uint8_t>& rgb);

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace fixture
