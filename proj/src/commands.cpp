#include "jdr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "jdr/asm_relu.hpp"
#include "jdr/jpeg_io.hpp"
#include "jdr/model.hpp"
#include "jdr/spatial_ref.hpp"

namespace jdr {

namespace {

// Pixels in [0, 255] mapped to roughly [-1, 1] before the first layer.
constexpr InputNormalization kPixelNormalization{127.5, 127.5};

std::string sig9(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

/// (count, channels, h, w) integer-valued pixels in [0, 255].
Tensor<double> random_pixels(std::size_t count, const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(0, 255);
  Tensor<double> x({count, spec.in_channels, spec.input.height, spec.input.width});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = dist(rng);
  return x;
}

/// Encodes every (h, w) plane of an (n, c, h, w) pixel tensor without rounding.
CoefficientTensor<double> encode_batch(const Tensor<double>& pixels, const QuantTable& quant) {
  const std::size_t N = pixels.extent(0), C = pixels.extent(1), H = pixels.extent(2), W = pixels.extent(3);
  const auto t = build_block_transform(quant);
  const std::size_t R = H / 8, Cc = W / 8, plane_size = R * Cc * 64;
  Tensor<double> data({N, C, R, Cc, 64});
  for (std::size_t p = 0; p < N * C; ++p) {
    Tensor<double> plane({H, W}, std::vector<double>(pixels.raw() + p * H * W, pixels.raw() + (p + 1) * H * W));
    const auto coeffs = encode_plane_blockwise(plane, t, false);
    std::copy(coeffs.raw(), coeffs.raw() + plane_size, data.raw() + p * plane_size);
  }
  return {std::move(data), quant};
}

std::size_t argmax_row(const Tensor<double>& logits, std::size_t row) {
  const std::size_t K = logits.extent(1);
  const double* p = logits.raw() + row * K;
  return static_cast<std::size_t>(std::max_element(p, p + K) - p);
}

ModelWeights weights_for(const RunConfig& config, const NetworkSpec& spec) {
  if (!config.weights.empty()) return load_weights_file(config.weights);
  auto w = random_spatial_weights(spec, config.seed);
  w.normalization = kPixelNormalization;
  w.quant = resolve_quant(config.quant);
  return w;
}

/// Edge-replicates a plane up to whole blocks.
Tensor<double> pad_to_blocks(const Tensor<double>& plane) {
  const std::size_t H = plane.extent(0), W = plane.extent(1);
  const std::size_t Hp = (H + 7) / 8 * 8, Wp = (W + 7) / 8 * 8;
  if (Hp == H && Wp == W) return plane;
  Tensor<double> out({Hp, Wp});
  for (std::size_t i = 0; i < Hp; ++i)
    for (std::size_t j = 0; j < Wp; ++j) out[i * Wp + j] = plane[std::min(i, H - 1) * W + std::min(j, W - 1)];
  return out;
}

bool is_jpeg(const std::vector<std::uint8_t>& bytes) { return bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8; }

}  // namespace

QuantTable resolve_quant(const std::string& source) {
  if (!std::filesystem::is_regular_file(source)) return QuantTable::from_name(source);
  std::ifstream f(source);
  std::array<std::uint16_t, 64> q{};
  for (auto& v : q) {
    long x = 0;
    if (!(f >> x)) throw ConfigError("quantization file '" + source + "' needs 64 integers");
    if (x < 1 || x > 255) throw ConfigError("quantization entry " + std::to_string(x) + " outside [1, 255]");
    v = static_cast<std::uint16_t>(x);
  }
  long extra = 0;
  if (f >> extra) throw ConfigError("quantization file '" + source + "' has more than 64 integers");
  return QuantTable(q);
}

int cmd_equiv(const RunConfig& config, std::ostream& out) {
  NetworkSpec spec;
  spec.budget = FrequencyBudget(config.budget);
  auto weights = weights_for(config, spec);
  weights.spec.budget = spec.budget;
  const auto quant = resolve_quant(config.quant);

  auto model = convert_model<float>(weights, quant);
  model.set_budget(spec.budget);

  const auto pixels = random_pixels(config.count, weights.spec, config.seed + 1);
  const auto reference = spatial_forward(weights, pixels);
  const auto coeffs = encode_batch(pixels, quant).cast<float>();

  double max_diff = 0.0, sum_diff = 0.0;
  std::size_t agree = 0;
  const std::size_t step = std::max<std::size_t>(config.batch, 1);
  const std::size_t K = weights.spec.num_classes;
  for (std::size_t start = 0; start < config.count; start += step) {
    const std::size_t n = std::min(step, config.count - start);
    const std::size_t per = coeffs.data.size() / config.count;
    Shape shape = coeffs.data.shape();
    shape[0] = n;
    Tensor<float> chunk(shape, std::vector<float>(coeffs.data.raw() + start * per, coeffs.data.raw() + (start + n) * per));
    const auto logits = forward(model, CoefficientTensor<float>(std::move(chunk), quant)).cast<double>();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        const double d = std::abs(logits[i * K + k] - reference[(start + i) * K + k]);
        max_diff = std::max(max_diff, d);
        sum_diff += d;
      }
      agree += argmax_row(logits, i) == argmax_row(reference, start + i);
    }
  }
  const double mean_diff = sum_diff / static_cast<double>(config.count * K);
  const bool ok = max_diff <= 1e-4;
  out << "inputs " << config.count << "\n"
      << "budget " << config.budget << "\n"
      << "max_abs_diff " << sig9(max_diff) << "\n"
      << "mean_abs_diff " << sig9(mean_diff) << "\n"
      << "argmax_agreement " << sig9(static_cast<double>(agree) / static_cast<double>(config.count)) << "\n"
      << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kAssertionFailed;
}

int cmd_relu_bench(const RunConfig& config, std::ostream& out) {
  const auto blocks = generate_test_blocks(config.blocks, config.seed);
  const auto rows = relu_error_sweep(blocks, resolve_quant(config.quant));

  std::ostringstream csv;
  csv << "budget,asm_rmse,apx_rmse\n";
  bool ok = true;
  for (const auto& r : rows) {
    csv << r.budget << ',' << sig9(r.asm_rmse) << ',' << sig9(r.apx_rmse) << '\n';
    // Both errors are rounding noise once every coefficient is kept.
    const bool exact = r.asm_rmse < 1e-10 && r.apx_rmse < 1e-10;
    ok = ok && (r.asm_rmse <= r.apx_rmse || exact);
  }
  if (config.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(config.out);
    if (!f) throw ConfigError("cannot write '" + config.out + "'");
    f << csv.str();
    out << "wrote " << rows.size() << " rows to " << config.out << "\n";
  }
  out << (ok ? "asm <= apx at every budget" : "asm exceeds apx at some budget") << "\n";
  return ok ? kOk : kAssertionFailed;
}

int cmd_infer(const RunConfig& config, std::ostream& out) {
  if (config.inputs.empty()) throw ConfigError("infer needs at least one input file");
  NetworkSpec spec;
  auto weights = weights_for(config, spec);
  weights.spec.budget = FrequencyBudget(config.budget);
  auto model = jpeg_model_from_weights<double>(weights);
  model.set_budget(weights.spec.budget);

  for (const auto& path : config.inputs) {
    const auto bytes = read_file(path);
    CoefficientTensor<double> coeffs;
    double shift = 0.0;
    if (is_jpeg(bytes)) {
      coeffs = coefficients_for_network(parse_jpeg(bytes));
      shift = 128.0;
    } else {
      const auto planes = load_pnm(bytes, config.yuv);
      const std::size_t H = planes[0].extent(0), W = planes[0].extent(1);
      Tensor<double> pixels({1, planes.size(), H, W});
      for (std::size_t c = 0; c < planes.size(); ++c) std::copy_n(planes[c].raw(), H * W, pixels.raw() + c * H * W);
      if (H % 8 || W % 8) throw ShapeMismatch("image size must be a multiple of 8");
      coeffs = encode_batch(pixels, model.quant);
    }
    const auto logits = forward(model, coeffs, shift);
    out << path << ":";
    for (std::size_t k = 0; k < logits.extent(1); ++k) out << ' ' << sig9(logits[k]);
    out << "\nargmax " << argmax_row(logits, 0) << "\n";
  }
  return kOk;
}

int cmd_encode(const RunConfig& config, std::ostream& out) {
  if (config.inputs.size() != 1) throw ConfigError("encode takes exactly one input file");
  if (config.out.empty()) throw ConfigError("encode needs --out");
  const auto planes = load_pnm(read_file(config.inputs[0]), config.yuv);
  const auto t = build_block_transform(resolve_quant(config.quant));
  const double shift = config.level_shift ? 128.0 : 0.0;

  std::vector<CoefficientPlane> coeffs;
  for (const auto& p : planes) {
    auto shifted = pad_to_blocks(p);
    for (auto& v : shifted.data()) v -= shift;
    coeffs.push_back(encode_plane_blockwise(shifted, t, true));
  }
  const std::size_t rows = coeffs[0].extent(0), cols = coeffs[0].extent(1);

  std::ofstream f(config.out, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + config.out + "'");
  f << "JCOEF v1 " << coeffs.size() << ' ' << cols << ' ' << rows << '\n';
  for (const auto& c : coeffs)
    for (double v : c.data()) {
      const auto x = static_cast<std::uint32_t>(static_cast<std::int32_t>(v));
      const char le[4] = {static_cast<char>(x), static_cast<char>(x >> 8), static_cast<char>(x >> 16),
                          static_cast<char>(x >> 24)};
      f.write(le, 4);
    }
  if (!f) throw ConfigError("write failed for '" + config.out + "'");
  out << "encoded " << coeffs.size() << " plane(s), " << cols << "x" << rows << " blocks\n";
  return kOk;
}

int cmd_throughput(const RunConfig& config, std::ostream& out) {
  NetworkSpec spec;
  spec.budget = FrequencyBudget(config.budget);
  auto weights = weights_for(config, spec);
  weights.spec.budget = spec.budget;
  const auto quant = resolve_quant(config.quant);
  auto model = convert_model<float>(weights, quant);
  model.set_budget(spec.budget);

  const std::size_t batch = std::max<std::size_t>(config.batch, 1), reps = std::max<std::size_t>(config.reps, 1);
  const auto pixels = random_pixels(batch, weights.spec, config.seed + 1);
  const auto spatial_in = pixels.cast<float>();
  const auto jpeg_in = encode_batch(pixels, quant).cast<float>();

  using Clock = std::chrono::steady_clock;
  auto time = [&](auto&& fn) {
    fn();  // warm-up
    const auto t0 = Clock::now();
    for (std::size_t r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };
  const double jpeg_s = time([&] { (void)forward(model, jpeg_in); });
  const double spatial_s = time([&] { (void)spatial_forward(weights, spatial_in); });
  const double images = static_cast<double>(batch * reps);
  const double jpeg_rate = images / jpeg_s, spatial_rate = images / spatial_s;
  out << "images " << batch * reps << " (batch " << batch << " x reps " << reps << ")\n"
      << "jpeg_images_per_sec " << sig9(jpeg_rate) << "\n"
      << "spatial_images_per_sec " << sig9(spatial_rate) << "\n"
      << "jpeg_over_spatial " << sig9(jpeg_rate / spatial_rate) << "\n";
  return kOk;
}

int cmd_convert(const RunConfig& config, std::ostream& out) {
  if (config.weights.empty() || config.out.empty()) throw ConfigError("convert needs --weights and --out");
  auto weights = load_weights_file(config.weights);
  if (weights.domain != Domain::spatial) throw ConfigError("convert expects spatial weights");
  weights.spec.budget = FrequencyBudget(config.budget);
  const auto model = convert_model<float>(weights, resolve_quant(config.quant));
  save_weights_file(to_weights(model), config.out);
  out << "wrote jpeg-domain weights to " << config.out << "\n";
  return kOk;
}

int cmd_init(const RunConfig& config, std::ostream& out) {
  if (config.out.empty()) throw ConfigError("init needs --out");
  NetworkSpec spec;
  spec.budget = FrequencyBudget(config.budget);
  auto weights = config.zero ? zero_spatial_weights(spec) : random_spatial_weights(spec, config.seed);
  weights.normalization = kPixelNormalization;
  weights.quant = resolve_quant(config.quant);
  save_weights_file(weights, config.out);
  out << "wrote " << (config.zero ? "zero" : "random") << " spatial weights to " << config.out << "\n";
  return kOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual network inference on JPEG coefficients"};
  app.require_subcommand(1);
  RunConfig config;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--quant", config.quant, "Quantization table: ones, luma, chroma, luma:<q>, chroma:<q>, or a file")
        ->capture_default_str();
    sub->add_option("--budget", config.budget, "ReLu frequency budget")->check(CLI::Range(1, 15))->capture_default_str();
    sub->add_option("--seed", config.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", config.out, "Output path");
    sub->add_option("--weights", config.weights, "Weight file");
  };

  auto* equiv = app.add_subcommand("equiv", "Compare spatial and JPEG-domain logits on random inputs");
  add_common(equiv);
  equiv->add_option("--count", config.count, "Number of random inputs")->check(CLI::PositiveNumber)->capture_default_str();
  equiv->add_option("--batch", config.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();

  auto* bench = app.add_subcommand("relu-bench", "RMSE of ASM and APX ReLu for every budget");
  add_common(bench);
  bench->add_option("--blocks", config.blocks, "Number of random blocks")->check(CLI::PositiveNumber)->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Classify JPEG or PNM files");
  add_common(infer);
  infer->add_option("inputs", config.inputs, "Input files")->required();
  infer->add_flag("--yuv", config.yuv, "Convert P6 input to YCbCr");

  auto* encode = app.add_subcommand("encode", "Dump the quantized coefficients of a PNM file");
  add_common(encode);
  encode->add_option("input", config.inputs, "Input PNM")->required();
  encode->add_flag("--yuv", config.yuv, "Convert P6 input to YCbCr");
  encode->add_flag("!--no-level-shift", config.level_shift, "Encode raw pixels instead of pixel - 128");

  auto* throughput = app.add_subcommand("throughput", "Images per second, JPEG-domain vs spatial forward");
  add_common(throughput);
  throughput->add_option("--batch", config.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  throughput->add_option("--reps", config.reps, "Timed repetitions")->check(CLI::PositiveNumber)->capture_default_str();

  auto* convert = app.add_subcommand("convert", "Convert spatial weights to a JPEG-domain weight file");
  add_common(convert);

  auto* init = app.add_subcommand("init", "Write random (or zero) spatial weights");
  add_common(init);
  init->add_flag("--zero", config.zero, "All-zero convolutions and head");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << e.what() << "\n";
    return kUsage;
  }

  auto* sub = app.get_subcommands().front();
  config.command = sub->get_name();
  try {
    if (sub == equiv) return cmd_equiv(config, out);
    if (sub == bench) return cmd_relu_bench(config, out);
    if (sub == infer) return cmd_infer(config, out);
    if (sub == encode) return cmd_encode(config, out);
    if (sub == throughput) return cmd_throughput(config, out);
    if (sub == convert) return cmd_convert(config, out);
    return cmd_init(config, out);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kInputFormat;
  }
}

}  // namespace jdr
