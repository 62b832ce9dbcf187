#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "jdr/model.hpp"

namespace jdr {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'J', 'D', 'R', 'N'};

enum : std::uint8_t { kF32 = 0, kF64 = 1 };

class Writer {
 public:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    const auto s = get_bytes(n);
    return std::string(s.begin(), s.end());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptFile("weight file truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_data(Writer& w, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : t.data()) w.put(std::bit_cast<Bits>(v));
}

template <typename T>
Tensor<T> read_data(Reader& r, Shape shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const std::size_t n = element_count(shape);
  std::vector<T> data(n);
  for (auto& v : data) v = std::bit_cast<T>(r.get<Bits>());
  return Tensor<T>(std::move(shape), std::move(data));
}

nlohmann::json metadata(const ModelWeights& w) {
  const auto& s = w.spec;
  nlohmann::json j;
  j["domain"] = w.domain == Domain::spatial ? "spatial" : "jpeg";
  j["quant"] = std::vector<int>(w.quant.values().begin(), w.quant.values().end());
  j["budget"] = s.budget.n_freqs();
  j["normalization"] = {{"mean", w.normalization.mean}, {"scale", w.normalization.scale}};
  j["bn_epsilon"] = w.bn_epsilon;
  j["network"] = {{"input", {s.input.height, s.input.width}},
                  {"in_channels", s.in_channels},
                  {"channels", s.channels},
                  {"strides", s.strides},
                  {"num_classes", s.num_classes},
                  {"kernel_size", s.kernel_size}};
  return j;
}

void apply_metadata(const nlohmann::json& j, ModelWeights& w) {
  const std::string domain = j.at("domain");
  if (domain == "spatial")
    w.domain = Domain::spatial;
  else if (domain == "jpeg")
    w.domain = Domain::jpeg;
  else
    throw CorruptFile("unknown domain '" + domain + "'");
  const auto q = j.at("quant").get<std::vector<int>>();
  if (q.size() != 64) throw CorruptFile("quantization table must have 64 entries");
  std::array<std::uint16_t, 64> zz{};
  for (std::size_t k = 0; k < 64; ++k) {
    if (q[k] < 1 || q[k] > 255) throw CorruptFile("quantization entry out of range");
    zz[k] = static_cast<std::uint16_t>(q[k]);
  }
  w.quant = QuantTable(zz);
  w.normalization.mean = j.at("normalization").at("mean");
  w.normalization.scale = j.at("normalization").at("scale");
  w.bn_epsilon = j.at("bn_epsilon");
  const auto& n = j.at("network");
  auto& s = w.spec;
  s.input = {n.at("input").at(0), n.at("input").at(1)};
  s.in_channels = n.at("in_channels");
  s.channels = n.at("channels");
  s.strides = n.at("strides");
  s.num_classes = n.at("num_classes");
  s.kernel_size = n.at("kernel_size");
  s.budget = FrequencyBudget(j.at("budget").get<int>());
}

}  // namespace

std::vector<std::uint8_t> save_weights(const ModelWeights& weights) {
  Writer w;
  w.put_bytes(kMagic.data(), kMagic.size());
  w.put(kWeightsVersion);
  w.put(static_cast<std::uint32_t>(weights.tensors.size()));
  for (const auto& entry : weights.tensors) {
    w.put_string(entry.name);
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          w.put(std::is_same_v<T, float> ? kF32 : kF64);
          w.put(static_cast<std::uint32_t>(t.rank()));
          for (auto e : t.shape()) w.put(static_cast<std::uint64_t>(e));
          write_data(w, t);
        },
        entry.tensor);
  }
  w.put_string(metadata(weights).dump());
  return w.take();
}

ModelWeights load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 2) {
    if (bytes.size() >= kMagic.size() && !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
      throw VersionMismatch("not a weight file (bad magic)");
    throw CorruptFile("weight file too short");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw VersionMismatch("not a weight file (bad magic)");
  Reader r(bytes.subspan(kMagic.size()));
  const auto version = r.get<std::uint16_t>();
  if (version != kWeightsVersion) throw VersionMismatch("unsupported weight file version " + std::to_string(version));

  ModelWeights weights;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.get_string();
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kF32 && dtype != kF64) throw CorruptFile("unknown dtype code " + std::to_string(dtype));
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 16) throw CorruptFile("bad rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.get<std::uint64_t>();
      if (e == 0 || e > (std::uint64_t{1} << 40)) throw CorruptFile("bad extent for '" + name + "'");
      shape.push_back(static_cast<std::size_t>(e));
    }
    if (dtype == kF32)
      weights.tensors.push_back({std::move(name), read_data<float>(r, std::move(shape))});
    else
      weights.tensors.push_back({std::move(name), read_data<double>(r, std::move(shape))});
  }
  const auto meta = r.get_string();
  if (!r.done()) throw CorruptFile("trailing bytes after metadata");
  try {
    apply_metadata(nlohmann::json::parse(meta), weights);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("bad metadata: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptFile(e.what());
  }
  return weights;
}

void save_weights_file(const ModelWeights& weights, const std::string& path) {
  const auto bytes = save_weights(weights);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("write failed for '" + path + "'");
}

ModelWeights load_weights_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load_weights(bytes);
}

}  // namespace jdr
