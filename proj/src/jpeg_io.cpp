#include "jdr/jpeg_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

namespace jdr {

void HuffmanTable::build() {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total > 256) throw CorruptStream("Huffman table with " + std::to_string(total) + " symbols");
  if (symbols.size() != total) throw CorruptStream("Huffman symbol count does not match code lengths");

  std::int32_t code = 0;
  std::int32_t k = 0;
  max_code.fill(-1);
  val_offset.fill(0);
  for (int len = 1; len <= 16; ++len) {
    const std::int32_t n = counts[static_cast<std::size_t>(len - 1)];
    if (n > 0) {
      val_offset[static_cast<std::size_t>(len)] = k - code;
      code += n;
      k += n;
      max_code[static_cast<std::size_t>(len)] = code - 1;
    }
    // An all-ones code of any length is reserved.
    if (code >= (std::int32_t{1} << len)) throw CorruptStream("Huffman code lengths are over-subscribed");
    code <<= 1;
  }
  built = true;
}

CoefficientPlane ParsedComponent::plane() const {
  CoefficientPlane p({block_rows, block_cols, 64});
  for (std::size_t i = 0; i < coeffs.size(); ++i) p[i] = coeffs[i];
  return p;
}

bool ParsedJpeg::subsampled() const {
  return std::any_of(components.begin(), components.end(),
                     [&](const ParsedComponent& c) { return c.h_samp != components[0].h_samp || c.v_samp != components[0].v_samp; });
}

namespace {

enum Marker : std::uint8_t {
  kSOF0 = 0xC0,
  kDHT = 0xC4,
  kDAC = 0xCC,
  kRST0 = 0xD0,
  kRST7 = 0xD7,
  kSOI = 0xD8,
  kEOI = 0xD9,
  kSOS = 0xDA,
  kDQT = 0xDB,
  kDNL = 0xDC,
  kDRI = 0xDD,
  kCOM = 0xFE,
};

bool is_unsupported_frame(std::uint8_t m) {
  return (m >= 0xC1 && m <= 0xCF) && m != kDHT && m != 0xC8;
}

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  std::uint32_t bits(int n) {
    if (n == 0) return 0;
    fill(n);
    count_ -= n;
    if (count_ < padding_) throw CorruptStream("entropy-coded data runs past the end of the scan");
    return (acc_ >> count_) & ((std::uint32_t{1} << n) - 1);
  }

  std::uint8_t decode(const HuffmanTable& t) {
    std::int32_t code = static_cast<std::int32_t>(bits(1));
    int len = 1;
    while (code > t.max_code[static_cast<std::size_t>(len)]) {
      if (++len > 16) throw CorruptStream("invalid Huffman code");
      code = (code << 1) | static_cast<std::int32_t>(bits(1));
    }
    return t.symbols[static_cast<std::size_t>(code + t.val_offset[static_cast<std::size_t>(len)])];
  }

  /// Drops buffered bits and returns the position of the next marker.
  std::size_t marker_position() {
    count_ = padding_ = 0;
    acc_ = 0;
    std::size_t p = pos_;
    while (true) {
      if (p + 1 >= data_.size()) throw TruncatedFile("scan data ends without a marker");
      if (data_[p] == 0xFF && data_[p + 1] != 0x00 && data_[p + 1] != 0xFF) return p;
      ++p;
    }
  }

  void reset(std::size_t pos) {
    pos_ = pos;
    acc_ = 0;
    count_ = padding_ = 0;
    at_marker_ = false;
  }

 private:
  void fill(int need) {
    while (count_ < need) {
      std::uint8_t byte = 0;
      if (at_marker_) {
        padding_ += 8;
      } else {
        if (pos_ >= data_.size()) throw TruncatedFile("scan data truncated");
        byte = data_[pos_];
        if (byte == 0xFF) {
          if (pos_ + 1 >= data_.size()) throw TruncatedFile("scan data truncated");
          if (data_[pos_ + 1] == 0x00) {
            pos_ += 2;
          } else {
            at_marker_ = true;
            byte = 0;
            padding_ += 8;
          }
        } else {
          ++pos_;
        }
      }
      acc_ = (acc_ << 8) | byte;
      count_ += 8;
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint32_t acc_ = 0;
  int count_ = 0;
  int padding_ = 0;
  bool at_marker_ = false;
};

std::int32_t extend(std::uint32_t v, int s) {
  if (s == 0) return 0;
  const auto x = static_cast<std::int32_t>(v);
  return x < (std::int32_t{1} << (s - 1)) ? x - (std::int32_t{1} << s) + 1 : x;
}

struct FrameComponent {
  std::uint8_t id = 0;
  std::uint8_t h = 1;
  std::uint8_t v = 1;
  std::uint8_t tq = 0;
  std::size_t alloc_rows = 0;  // block rows padded to whole MCUs
  std::size_t alloc_cols = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int16_t> coeffs;
  std::optional<QuantTable> quant;
};

class Parser {
 public:
  explicit Parser(std::span<const std::uint8_t> bytes) : data_(bytes) {}

  ParsedJpeg run() {
    if (data_.size() < 2 || data_[0] != 0xFF || data_[1] != kSOI) throw CorruptStream("missing SOI marker");
    pos_ = 2;
    while (true) {
      const std::uint8_t m = next_marker();
      if (m == kEOI) break;
      if (m == kSOF0) {
        read_frame();
      } else if (is_unsupported_frame(m)) {
        throw UnsupportedFormat(m == kDAC || m >= 0xC9 ? "arithmetic coding is not supported"
                                                      : "only baseline sequential JPEG is supported");
      } else if (m == kDHT) {
        read_dht();
      } else if (m == kDQT) {
        read_dqt();
      } else if (m == kDRI) {
        const auto len = segment_length();
        if (len != 4) throw CorruptStream("bad DRI length");
        restart_interval_ = u16(pos_);
        pos_ += 2;
      } else if (m == kSOS) {
        read_scan();
      } else if (m == kDNL) {
        throw UnsupportedFormat("DNL marker is not supported");
      } else if ((m >= 0xE0 && m <= 0xEF) || m == kCOM || (m >= 0xF0 && m <= 0xFD) || m == 0xC8) {
        const std::size_t len = segment_length();
        pos_ += len - 2;
      } else {
        throw CorruptStream("unexpected marker 0x" + hex(m));
      }
    }
    if (frame_.empty()) throw CorruptStream("no frame header before EOI");
    return finish();
  }

 private:
  static std::string hex(std::uint8_t m) {
    constexpr char digits[] = "0123456789ABCDEF";
    return {digits[m >> 4], digits[m & 15]};
  }

  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw TruncatedFile("file ends inside a segment");
  }

  std::uint16_t u16(std::size_t at) const {
    if (at + 2 > data_.size()) throw TruncatedFile("file ends inside a segment");
    return static_cast<std::uint16_t>((data_[at] << 8) | data_[at + 1]);
  }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint8_t next_marker() {
    need(1);
    if (data_[pos_] != 0xFF) throw CorruptStream("expected a marker at byte " + std::to_string(pos_));
    while (true) {
      need(1);
      if (data_[pos_] != 0xFF) break;
      ++pos_;
    }
    return u8();
  }

  // Consumes the length field; returns the full length including itself.
  std::size_t segment_length() {
    const std::size_t len = u16(pos_);
    if (len < 2) throw CorruptStream("segment length below 2");
    need(len);
    pos_ += 2;
    return len;
  }

  void read_frame() {
    if (!frame_.empty()) throw CorruptStream("second frame header");
    const std::size_t len = segment_length();
    const std::size_t end = pos_ + len - 2;
    const auto precision = u8();
    if (precision != 8) throw UnsupportedFormat(std::to_string(precision) + "-bit samples are not supported");
    height_ = u16(pos_);
    width_ = u16(pos_ + 2);
    pos_ += 4;
    if (height_ == 0) throw UnsupportedFormat("frame height defined by DNL is not supported");
    if (width_ == 0) throw CorruptStream("zero image width");
    const auto n = u8();
    if (n == 0 || n > 4) throw CorruptStream("frame with " + std::to_string(n) + " components");
    if (end != pos_ + 3u * n) throw CorruptStream("bad frame header length");
    for (std::size_t i = 0; i < n; ++i) {
      FrameComponent c;
      c.id = u8();
      const auto hv = u8();
      c.h = hv >> 4;
      c.v = hv & 15;
      c.tq = u8();
      if (c.h < 1 || c.h > 4 || c.v < 1 || c.v > 4) throw CorruptStream("bad sampling factors");
      if (c.tq > 3) throw CorruptStream("bad quantization table id");
      frame_.push_back(c);
    }
    for (const auto& c : frame_) {
      h_max_ = std::max<std::size_t>(h_max_, c.h);
      v_max_ = std::max<std::size_t>(v_max_, c.v);
    }
    mcus_x_ = (width_ + 8 * h_max_ - 1) / (8 * h_max_);
    mcus_y_ = (height_ + 8 * v_max_ - 1) / (8 * v_max_);
    for (auto& c : frame_) {
      const std::size_t sw = (width_ * c.h + h_max_ - 1) / h_max_;
      const std::size_t sh = (height_ * c.v + v_max_ - 1) / v_max_;
      c.cols = (sw + 7) / 8;
      c.rows = (sh + 7) / 8;
      c.alloc_cols = mcus_x_ * c.h;
      c.alloc_rows = mcus_y_ * c.v;
      c.coeffs.assign(c.alloc_rows * c.alloc_cols * 64, 0);
    }
  }

  void read_dqt() {
    const std::size_t len = segment_length();
    const std::size_t end = pos_ + len - 2;
    while (pos_ < end) {
      const auto pq_tq = u8();
      if ((pq_tq >> 4) != 0) throw UnsupportedFormat("16-bit quantization tables are not supported");
      const auto id = pq_tq & 15;
      if (id > 3) throw CorruptStream("bad quantization table id");
      need(64);
      std::array<std::uint16_t, 64> q{};
      for (auto& v : q) {
        v = data_[pos_++];
        if (v == 0) throw CorruptStream("zero quantization entry");
      }
      quant_[static_cast<std::size_t>(id)] = QuantTable(q);
    }
    if (pos_ != end) throw CorruptStream("bad DQT length");
  }

  void read_dht() {
    const std::size_t len = segment_length();
    const std::size_t end = pos_ + len - 2;
    while (pos_ < end) {
      HuffmanTable t;
      const auto tc_th = u8();
      if ((tc_th >> 4) > 1 || (tc_th & 15) > 3) throw CorruptStream("bad Huffman table id");
      t.table_class = static_cast<HuffmanClass>(tc_th >> 4);
      t.id = tc_th & 15;
      need(16);
      std::size_t total = 0;
      for (auto& c : t.counts) total += (c = data_[pos_++]);
      if (total > 256) throw CorruptStream("Huffman table with too many symbols");
      need(total);
      t.symbols.assign(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                       data_.begin() + static_cast<std::ptrdiff_t>(pos_ + total));
      pos_ += total;
      t.build();
      auto& slot = t.table_class == HuffmanClass::dc ? dc_ : ac_;
      slot[t.id] = std::move(t);
    }
    if (pos_ != end) throw CorruptStream("bad DHT length");
  }

  struct ScanComponent {
    FrameComponent* comp;
    const HuffmanTable* dc;
    const HuffmanTable* ac;
    std::int32_t pred = 0;
  };

  void read_scan() {
    if (frame_.empty()) throw CorruptStream("scan before frame header");
    const std::size_t len = segment_length();
    const std::size_t end = pos_ + len - 2;
    const auto ns = u8();
    if (ns < 1 || ns > 4 || end != pos_ + 2u * ns + 3) throw CorruptStream("bad scan header");
    std::vector<ScanComponent> scan;
    for (std::size_t i = 0; i < ns; ++i) {
      const auto id = u8();
      const auto tables = u8();
      auto it = std::find_if(frame_.begin(), frame_.end(), [&](const FrameComponent& c) { return c.id == id; });
      if (it == frame_.end()) throw CorruptStream("scan references unknown component");
      const auto td = static_cast<std::size_t>(tables >> 4), ta = static_cast<std::size_t>(tables & 15);
      if (td > 3 || ta > 3 || !dc_[td] || !ac_[ta]) throw CorruptStream("scan references undefined Huffman table");
      if (!it->quant) {
        if (!quant_[it->tq]) throw CorruptStream("component references undefined quantization table");
        it->quant = quant_[it->tq];
      }
      scan.push_back({&*it, &*dc_[td], &*ac_[ta]});
    }
    const auto ss = u8(), se = u8(), ahal = u8();
    if (ss != 0 || se != 63 || ahal != 0) throw UnsupportedFormat("progressive scan parameters");

    std::size_t units_x = mcus_x_, units_y = mcus_y_;
    if (ns == 1) {
      units_x = scan[0].comp->cols;
      units_y = scan[0].comp->rows;
    }
    const std::size_t total = units_x * units_y;

    BitReader reader(data_, pos_);
    unsigned expected_rst = 0;
    std::array<std::int16_t, 64> block{};
    for (std::size_t mcu = 0; mcu < total; ++mcu) {
      if (restart_interval_ != 0 && mcu != 0 && mcu % restart_interval_ == 0) {
        pos_ = reader.marker_position();
        const std::uint8_t m = data_[pos_ + 1];
        if (m < kRST0 || m > kRST7) throw CorruptStream("expected restart marker, found 0x" + hex(m));
        if (m - kRST0 != static_cast<int>(expected_rst)) throw CorruptStream("restart markers out of sequence");
        expected_rst = (expected_rst + 1) & 7;
        pos_ += 2;
        reader.reset(pos_);
        for (auto& s : scan) s.pred = 0;
      }
      const std::size_t mx = mcu % units_x, my = mcu / units_x;
      for (auto& s : scan) {
        const std::size_t bh = ns == 1 ? 1 : s.comp->h, bv = ns == 1 ? 1 : s.comp->v;
        for (std::size_t by = 0; by < bv; ++by)
          for (std::size_t bx = 0; bx < bh; ++bx) {
            decode_block(reader, s, block);
            const std::size_t row = my * bv + by, col = mx * bh + bx;
            auto* dst = s.comp->coeffs.data() + (row * s.comp->alloc_cols + col) * 64;
            std::copy(block.begin(), block.end(), dst);
          }
      }
    }
    pos_ = reader.marker_position();
  }

  static void decode_block(BitReader& r, ScanComponent& s, std::array<std::int16_t, 64>& out) {
    out.fill(0);
    const int t = r.decode(*s.dc);
    if (t > 11) throw CorruptStream("DC magnitude category above 11");
    s.pred += extend(r.bits(t), t);
    if (s.pred < -2048 || s.pred > 2047) throw CorruptStream("DC coefficient out of range");
    out[0] = static_cast<std::int16_t>(s.pred);
    for (int k = 1; k < 64;) {
      const int rs = r.decode(*s.ac);
      const int run = rs >> 4, size = rs & 15;
      if (size == 0) {
        if (run != 15) break;
        k += 16;
        continue;
      }
      if (size > 10) throw CorruptStream("AC magnitude category above 10");
      k += run;
      if (k > 63) throw CorruptStream("AC run past the end of the block");
      out[static_cast<std::size_t>(k++)] = static_cast<std::int16_t>(extend(r.bits(size), size));
    }
  }

  ParsedJpeg finish() {
    ParsedJpeg out;
    out.height = height_;
    out.width = width_;
    out.restart_interval = restart_interval_;
    for (auto& c : frame_) {
      if (!c.quant) throw CorruptStream("component never appears in a scan");
      ParsedComponent p;
      p.id = c.id;
      p.h_samp = c.h;
      p.v_samp = c.v;
      p.quant = *c.quant;
      p.sample_width = (width_ * c.h + h_max_ - 1) / h_max_;
      p.sample_height = (height_ * c.v + v_max_ - 1) / v_max_;
      p.block_rows = c.rows;
      p.block_cols = c.cols;
      p.coeffs.resize(c.rows * c.cols * 64);
      for (std::size_t r = 0; r < c.rows; ++r)
        std::copy_n(c.coeffs.begin() + static_cast<std::ptrdiff_t>(r * c.alloc_cols * 64), c.cols * 64,
                    p.coeffs.begin() + static_cast<std::ptrdiff_t>(r * c.cols * 64));
      out.components.push_back(std::move(p));
    }
    return out;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::size_t height_ = 0, width_ = 0;
  std::size_t h_max_ = 1, v_max_ = 1;
  std::size_t mcus_x_ = 0, mcus_y_ = 0;
  std::uint16_t restart_interval_ = 0;
  std::vector<FrameComponent> frame_;
  std::array<std::optional<QuantTable>, 4> quant_;
  std::array<std::optional<HuffmanTable>, 4> dc_, ac_;
};

// Skips whitespace and '#' comments, then reads one decimal header field.
std::size_t pnm_field(std::span<const std::uint8_t> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size()) throw TruncatedFile("PNM header truncated");
  if (!std::isdigit(b[pos])) throw UnsupportedFormat("malformed PNM header");
  std::size_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > (1u << 24)) throw UnsupportedFormat("PNM header value too large");
  }
  return v;
}

}  // namespace

ParsedJpeg parse_jpeg(std::span<const std::uint8_t> bytes) { return Parser(bytes).run(); }

std::vector<Tensor<double>> load_pnm(std::span<const std::uint8_t> bytes, bool to_ycbcr) {
  if (bytes.size() < 2) throw TruncatedFile("PNM header truncated");
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) throw UnsupportedFormat("only binary P5 and P6 are supported");
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const std::size_t width = pnm_field(bytes, pos);
  const std::size_t height = pnm_field(bytes, pos);
  const std::size_t maxval = pnm_field(bytes, pos);
  if (width == 0 || height == 0) throw UnsupportedFormat("empty PNM image");
  if (maxval != 255) throw UnsupportedFormat("PNM maxval " + std::to_string(maxval) + " (only 255 is supported)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw TruncatedFile("PNM header truncated");
  ++pos;
  const std::size_t n = width * height;
  if (bytes.size() - pos < n * channels) throw TruncatedFile("PNM pixel data truncated");

  std::vector<Tensor<double>> planes(channels, Tensor<double>({height, width}));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < channels; ++c) planes[c][i] = bytes[pos + i * channels + c];

  if (channels == 3 && to_ycbcr) {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = planes[0][i], g = planes[1][i], b = planes[2][i];
      planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
      planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
      planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    }
  }
  return planes;
}

CoefficientTensor<double> coefficients_for_network(const ParsedJpeg& parsed) {
  if (parsed.components.empty()) throw InvalidArgument("no components");
  if (parsed.subsampled()) throw SubsamplingUnsupported("chroma subsampling is not supported by the network input");
  const auto& first = parsed.components[0];
  const std::size_t C = parsed.components.size(), R = first.block_rows, Cc = first.block_cols;
  Tensor<double> data({1, C, R, Cc, 64});
  const auto& q0 = first.quant.values();
  for (std::size_t c = 0; c < C; ++c) {
    const auto& comp = parsed.components[c];
    const auto& q = comp.quant.values();
    double* dst = data.raw() + c * R * Cc * 64;
    for (std::size_t b = 0; b < R * Cc; ++b)
      for (std::size_t k = 0; k < 64; ++k)
        dst[b * 64 + k] = static_cast<double>(comp.coeffs[b * 64 + k]) * q[k] / q0[k];
  }
  return CoefficientTensor<double>(std::move(data), first.quant);
}

std::vector<Tensor<double>> reconstruct_pixels(const ParsedJpeg& parsed) {
  std::vector<Tensor<double>> out;
  for (const auto& comp : parsed.components) {
    const auto full = decode_plane_blockwise(comp.plane(), build_block_transform(comp.quant));
    const std::size_t W = full.extent(1);
    Tensor<double> plane({comp.sample_height, comp.sample_width});
    for (std::size_t i = 0; i < comp.sample_height; ++i)
      for (std::size_t j = 0; j < comp.sample_width; ++j)
        plane[i * comp.sample_width + j] = std::clamp(full[i * W + j] + 128.0, 0.0, 255.0);
    out.push_back(std::move(plane));
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace jdr
