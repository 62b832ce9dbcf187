#include "jpeg_fixtures.hpp"

#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include <jpeglib.h>

namespace fixture {

namespace {

struct ErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<ErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void silence(j_common_ptr, int) {}

}  // namespace

Image synthetic_image(const EncodeOptions& opt) {
  Image img;
  img.width = opt.width;
  img.height = opt.height;
  img.components = opt.sampling == Sampling::gray ? 1 : 3;
  img.samples.resize(static_cast<std::size_t>(img.width * img.height * img.components));
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, 12.0);
  std::uniform_real_distribution<double> phase(0.0, 6.28);
  const double p0 = phase(rng), p1 = phase(rng), p2 = phase(rng);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.components; ++c) {
        const double base = c == 0 ? 128.0 + 70.0 * std::sin(0.21 * x + p0) * std::cos(0.13 * y + p1)
                                   : 128.0 + 40.0 * std::sin(0.17 * (x + y) + p2 + c);
        const double v = std::round(base + noise(rng));
        img.samples[static_cast<std::size_t>((y * img.width + x) * img.components + c)] =
            static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
  return img;
}

std::vector<std::uint8_t> encode(const Image& img, const EncodeOptions& opt) {
  jpeg_compress_struct cinfo;
  ErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_error;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw std::runtime_error(err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = img.components;
  cinfo.in_color_space = img.components == 1 ? JCS_GRAYSCALE : JCS_YCbCr;
  jpeg_set_defaults(&cinfo);
  jpeg_set_colorspace(&cinfo, img.components == 1 ? JCS_GRAYSCALE : JCS_YCbCr);
  jpeg_set_quality(&cinfo, opt.quality, TRUE);
  if (img.components == 3) {
    const int f = opt.sampling == Sampling::s420 ? 2 : 1;
    cinfo.comp_info[0].h_samp_factor = f;
    cinfo.comp_info[0].v_samp_factor = f;
    for (int c = 1; c < 3; ++c) cinfo.comp_info[c].h_samp_factor = cinfo.comp_info[c].v_samp_factor = 1;
  }
  cinfo.restart_interval = static_cast<unsigned>(opt.restart_interval);
  cinfo.optimize_coding = FALSE;
  jpeg_start_compress(&cinfo, TRUE);
  const int stride = img.width * img.components;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.samples.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  std::free(buffer);
  return out;
}

std::vector<std::uint8_t> encode(const EncodeOptions& opt) { return encode(synthetic_image(opt), opt); }

Image reference_decode(const std::vector<std::uint8_t>& jpeg) {
  jpeg_decompress_struct cinfo;
  ErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_error;
  err.pub.emit_message = silence;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, jpeg.data(), static_cast<unsigned long>(jpeg.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_YCbCr;
  cinfo.dct_method = JDCT_FLOAT;
  jpeg_start_decompress(&cinfo);
  Image img;
  img.width = static_cast<int>(cinfo.output_width);
  img.height = static_cast<int>(cinfo.output_height);
  img.components = cinfo.output_components;
  img.samples.resize(static_cast<std::size_t>(img.width * img.height * img.components));
  const int stride = img.width * img.components;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.samples.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

std::vector<ReferenceComponent> reference_coefficients(const std::vector<std::uint8_t>& jpeg) {
  jpeg_decompress_struct cinfo;
  ErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_error;
  err.pub.emit_message = silence;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, jpeg.data(), static_cast<unsigned long>(jpeg.size()));
  jpeg_read_header(&cinfo, TRUE);
  jvirt_barray_ptr* arrays = jpeg_read_coefficients(&cinfo);
  std::vector<ReferenceComponent> out;
  for (int c = 0; c < cinfo.num_components; ++c) {
    const jpeg_component_info& info = cinfo.comp_info[c];
    ReferenceComponent rc;
    rc.width_in_blocks = static_cast<int>(info.width_in_blocks);
    rc.height_in_blocks = static_cast<int>(info.height_in_blocks);
    for (int k = 0; k < 64; ++k) rc.quant.push_back(info.quant_table->quantval[k]);
    for (int r = 0; r < rc.height_in_blocks; ++r) {
      JBLOCKARRAY rows = (*cinfo.mem->access_virt_barray)(reinterpret_cast<j_common_ptr>(&cinfo), arrays[c],
                                                          static_cast<JDIMENSION>(r), 1, FALSE);
      for (int b = 0; b < rc.width_in_blocks; ++b)
        for (int k = 0; k < 64; ++k) rc.coeffs.push_back(rows[0][b][k]);
    }
    out.push_back(std::move(rc));
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

std::vector<std::uint8_t> pgm(int width, int height, const std::vector<std::uint8_t>& samples) {
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), samples.begin(), samples.end());
  return out;
}

std::vector<std::uint8_t> ppm(int width, int height, const std::vector<std::uint8_t>& rgb) {
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fixture
