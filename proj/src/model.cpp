#include "jdr/model.hpp"

#include <cmath>
#include <random>

namespace jdr {

// --- network description -------------------------------------------------

PlaneGeometry NetworkSpec::stage_geometry(std::size_t i) const {
  PlaneGeometry g = input;
  for (std::size_t b = 0; b < i && b < kBlocks; ++b) g = {g.height / strides[b], g.width / strides[b]};
  return g;
}

void NetworkSpec::validate() const {
  input.validate();
  if (in_channels == 0 || num_classes == 0) throw ShapeMismatch("channel and class counts must be positive");
  if (kernel_size % 2 == 0) throw GeometryError("kernel size must be odd");
  PlaneGeometry g = input;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    if (channels[b] == 0) throw ShapeMismatch("empty stage");
    if (strides[b] != 1 && strides[b] != 2) throw StrideUnsupported("stage stride " + std::to_string(strides[b]));
    if (g.height % strides[b] || g.width % strides[b]) throw GeometryError("stage not divisible by its stride");
    g = {g.height / strides[b], g.width / strides[b]};
    g.validate();
  }
  if (g.blocks() != 1)
    throw GeometryError("final feature map is " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                        ", expected a single 8x8 block");
}

const Shape& shape_of(const AnyTensor& t) {
  return std::visit([](const auto& v) -> const Shape& { return v.shape(); }, t);
}

Tensor<double> as_double(const AnyTensor& t) {
  return std::visit([](const auto& v) { return v.template cast<double>(); }, t);
}

const NamedTensor* ModelWeights::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const AnyTensor& ModelWeights::get(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw ShapeMismatch("missing tensor '" + name + "'");
  return t->tensor;
}

void ModelWeights::set(const std::string& name, AnyTensor t) {
  for (auto& e : tensors)
    if (e.name == name) {
      e.tensor = std::move(t);
      return;
    }
  tensors.push_back({name, std::move(t)});
}

std::string layer_name(std::size_t block, const std::string& layer) {
  return "block" + std::to_string(block + 1) + "." + layer;
}

BatchNormParams bn_params(const ModelWeights& w, const std::string& prefix) {
  auto vec = [&](const char* field) {
    const auto t = as_double(w.get(prefix + "." + field));
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  BatchNormParams p;
  p.gamma = vec("gamma");
  p.beta = vec("beta");
  p.running_mean = vec("running_mean");
  p.running_var = vec("running_var");
  p.epsilon = w.bn_epsilon;
  p.validate();
  return p;
}

ResidualBlockWeights block_weights(const ModelWeights& w, std::size_t block) {
  ResidualBlockWeights out;
  out.conv1 = as_double(w.get(layer_name(block, "conv1.weight")));
  out.bn1 = bn_params(w, layer_name(block, "bn1"));
  out.conv2 = as_double(w.get(layer_name(block, "conv2.weight")));
  out.bn2 = bn_params(w, layer_name(block, "bn2"));
  if (w.spec.has_projection(block)) out.projection = as_double(w.get(layer_name(block, "proj.weight")));
  return out;
}

namespace {

struct LayerShape {
  std::string name;
  Shape shape;
};

std::vector<LayerShape> spatial_layout(const NetworkSpec& spec) {
  std::vector<LayerShape> out;
  const std::size_t k = spec.kernel_size;
  for (std::size_t b = 0; b < NetworkSpec::kBlocks; ++b) {
    const std::size_t ci = spec.stage_in_channels(b), co = spec.channels[b];
    out.push_back({layer_name(b, "conv1.weight"), {co, ci, k, k}});
    for (const char* f : {"gamma", "beta", "running_mean", "running_var"})
      out.push_back({layer_name(b, std::string("bn1.") + f), {co}});
    out.push_back({layer_name(b, "conv2.weight"), {co, co, k, k}});
    for (const char* f : {"gamma", "beta", "running_mean", "running_var"})
      out.push_back({layer_name(b, std::string("bn2.") + f), {co}});
    if (spec.has_projection(b)) out.push_back({layer_name(b, "proj.weight"), {co, ci, 1, 1}});
  }
  out.push_back({"fc.weight", {spec.num_classes, spec.channels.back()}});
  out.push_back({"fc.bias", {spec.num_classes}});
  return out;
}

}  // namespace

void validate_spatial_weights(const ModelWeights& w) {
  w.spec.validate();
  for (const auto& layer : spatial_layout(w.spec)) {
    const auto& shape = shape_of(w.get(layer.name));
    if (shape != layer.shape)
      throw ShapeMismatch("tensor '" + layer.name + "' has shape " + to_string(shape) + ", expected " +
                          to_string(layer.shape));
  }
}

ModelWeights random_spatial_weights(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  // Box-Muller keeps the stream identical across standard libraries.
  auto normal = [&](double sd) {
    const double u1 = 1.0 - unit(rng), u2 = unit(rng);
    return sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };

  ModelWeights w;
  w.spec = spec;
  for (const auto& layer : spatial_layout(spec)) {
    Tensor<double> t(layer.shape);
    const auto& name = layer.name;
    auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (layer.shape.size() == 4) {
      const double fan_in = static_cast<double>(layer.shape[1] * layer.shape[2] * layer.shape[3]);
      for (auto& v : t.data()) v = normal(std::sqrt(2.0 / fan_in));
    } else if (ends_with("gamma")) {
      for (auto& v : t.data()) v = uniform(0.8, 1.2);
    } else if (ends_with("beta") || ends_with("running_mean")) {
      for (auto& v : t.data()) v = uniform(-0.1, 0.1);
    } else if (ends_with("running_var")) {
      for (auto& v : t.data()) v = uniform(0.8, 1.2);
    } else if (name == "fc.weight") {
      for (auto& v : t.data()) v = normal(std::sqrt(1.0 / static_cast<double>(layer.shape[1])));
    } else {
      for (auto& v : t.data()) v = uniform(-0.1, 0.1);
    }
    w.set(name, std::move(t));
  }
  return w;
}

ModelWeights zero_spatial_weights(const NetworkSpec& spec) {
  spec.validate();
  ModelWeights w;
  w.spec = spec;
  for (const auto& layer : spatial_layout(spec)) {
    const bool one = layer.name.ends_with("gamma") || layer.name.ends_with("running_var");
    w.set(layer.name, Tensor<double>(layer.shape, one ? 1.0 : 0.0));
  }
  return w;
}

// --- compressed-domain model ---------------------------------------------

template <typename T>
void JpegModel<T>::set_budget(const FrequencyBudget& budget) {
  spec.budget = budget;
  approx = {build_approx_decoder(budget, quant).matrix.template cast<T>(), budget, quant};
}

template <typename T>
JpegModel<T> convert_model(const ModelWeights& spatial, const QuantTable& quant) {
  if (spatial.domain != Domain::spatial) throw InvalidArgument("convert_model expects spatial-domain weights");
  validate_spatial_weights(spatial);
  const auto& spec = spatial.spec;

  JpegModel<T> model;
  model.spec = spec;
  model.quant = quant;
  model.normalization = spatial.normalization;
  for (std::size_t b = 0; b < NetworkSpec::kBlocks; ++b) {
    const auto bw = block_weights(spatial, b);
    const auto in_geom = spec.stage_geometry(b);
    const auto out_geom = spec.stage_geometry(b + 1);
    typename JpegModel<T>::Block block;
    block.conv1 = build_conv_map(bw.conv1, in_geom, spec.strides[b], quant, quant).template cast<T>();
    block.bn1 = bw.bn1;
    block.conv2 = build_conv_map(bw.conv2, out_geom, 1, quant, quant).template cast<T>();
    block.bn2 = bw.bn2;
    if (bw.projection)
      block.projection = build_conv_map(*bw.projection, in_geom, spec.strides[b], quant, quant).template cast<T>();
    model.blocks.push_back(std::move(block));
  }
  model.fc_weight = as_double(spatial.get("fc.weight"));
  model.fc_bias = as_double(spatial.get("fc.bias"));
  model.mixing = build_harmonic_mixing(quant).template cast<T>();
  model.set_budget(spec.budget);
  return model;
}

template <typename T>
CoefficientTensor<T> prepare_input(const JpegModel<T>& model, const CoefficientTensor<T>& input, double level_shift) {
  if (input.channels() != model.spec.in_channels || !(input.geometry() == model.spec.input))
    throw ShapeMismatch("input " + to_string(input.data.shape()) + " does not match the network input (" +
                        std::to_string(model.spec.in_channels) + " channels, " +
                        std::to_string(model.spec.input.height) + "x" + std::to_string(model.spec.input.width) + ")");
  const auto& norm = model.normalization;
  return affine(requantize(input, model.quant), 1.0 / norm.scale, (level_shift - norm.mean) / norm.scale);
}

template <typename T>
Tensor<T> forward(const JpegModel<T>& model, const CoefficientTensor<T>& input, double level_shift) {
  auto relu = [&](const CoefficientTensor<T>& y) {
    return model.relu == ReluVariant::asm_mask ? asm_relu(y, model.approx, model.mixing)
                                               : apx_relu(y, model.spec.budget, model.quant);
  };

  auto x = prepare_input(model, input, level_shift);
  for (const auto& block : model.blocks) {
    auto y = relu(jpeg_batchnorm(apply_conv(block.conv1, x), block.bn1));
    y = jpeg_batchnorm(apply_conv(block.conv2, y), block.bn2);
    x = relu(jpeg_add(y, block.projection ? apply_conv(*block.projection, x) : x));
  }

  const auto pooled = global_avg_pool(x);
  const std::size_t N = pooled.extent(0), C = pooled.extent(1), K = model.fc_weight.extent(0);
  Tensor<T> logits({N, K});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = model.fc_bias[k];
      for (std::size_t c = 0; c < C; ++c) acc += static_cast<double>(pooled[n * C + c]) * model.fc_weight[k * C + c];
      logits[n * K + k] = static_cast<T>(acc);
    }
  return logits;
}

template <typename T>
ModelWeights to_weights(const JpegModel<T>& model) {
  ModelWeights w;
  w.domain = Domain::jpeg;
  w.quant = model.quant;
  w.normalization = model.normalization;
  w.spec = model.spec;
  auto put_bn = [&](const std::string& prefix, const BatchNormParams& p) {
    w.bn_epsilon = p.epsilon;
    auto vec = [](const std::vector<double>& v) { return Tensor<double>({v.size()}, v); };
    w.set(prefix + ".gamma", vec(p.gamma));
    w.set(prefix + ".beta", vec(p.beta));
    w.set(prefix + ".running_mean", vec(p.running_mean));
    w.set(prefix + ".running_var", vec(p.running_var));
  };
  auto put_conv = [&](const std::string& prefix, const ConvMap<T>& map) {
    w.set(prefix + ".weight", map.kernel);
    w.set(prefix + ".xi", map.xi);
  };
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const auto& block = model.blocks[b];
    put_conv(layer_name(b, "conv1"), block.conv1);
    put_bn(layer_name(b, "bn1"), block.bn1);
    put_conv(layer_name(b, "conv2"), block.conv2);
    put_bn(layer_name(b, "bn2"), block.bn2);
    if (block.projection) put_conv(layer_name(b, "proj"), *block.projection);
  }
  w.set("fc.weight", model.fc_weight);
  w.set("fc.bias", model.fc_bias);
  return w;
}

template <typename T>
JpegModel<T> jpeg_model_from_weights(const ModelWeights& weights) {
  if (weights.domain == Domain::spatial) return convert_model<T>(weights, weights.quant);
  validate_spatial_weights(weights);
  const auto& spec = weights.spec;
  const auto& quant = weights.quant;
  auto load_conv = [&](std::size_t b, const std::string& layer, const PlaneGeometry& geom, std::size_t stride) {
    const auto kernel = as_double(weights.get(layer_name(b, layer + ".weight")));
    auto xi = std::visit([](const auto& t) { return t.template cast<T>(); }, weights.get(layer_name(b, layer + ".xi")));
    return conv_map_from_parts<T>(kernel, geom, stride, quant, quant, std::move(xi));
  };

  JpegModel<T> model;
  model.spec = spec;
  model.quant = quant;
  model.normalization = weights.normalization;
  for (std::size_t b = 0; b < NetworkSpec::kBlocks; ++b) {
    const auto in_geom = spec.stage_geometry(b), out_geom = spec.stage_geometry(b + 1);
    typename JpegModel<T>::Block block;
    block.conv1 = load_conv(b, "conv1", in_geom, spec.strides[b]);
    block.bn1 = bn_params(weights, layer_name(b, "bn1"));
    block.conv2 = load_conv(b, "conv2", out_geom, 1);
    block.bn2 = bn_params(weights, layer_name(b, "bn2"));
    if (spec.has_projection(b)) block.projection = load_conv(b, "proj", in_geom, spec.strides[b]);
    model.blocks.push_back(std::move(block));
  }
  model.fc_weight = as_double(weights.get("fc.weight"));
  model.fc_bias = as_double(weights.get("fc.bias"));
  model.mixing = build_harmonic_mixing(quant).template cast<T>();
  model.set_budget(spec.budget);
  return model;
}

#define JDR_INSTANTIATE(T)                                                                                   \
  template struct JpegModel<T>;                                                                              \
  template JpegModel<T> convert_model(const ModelWeights&, const QuantTable&);                              \
  template CoefficientTensor<T> prepare_input(const JpegModel<T>&, const CoefficientTensor<T>&, double);    \
  template Tensor<T> forward(const JpegModel<T>&, const CoefficientTensor<T>&, double);                     \
  template ModelWeights to_weights(const JpegModel<T>&);                                                     \
  template JpegModel<T> jpeg_model_from_weights(const ModelWeights&);

JDR_INSTANTIATE(float)
JDR_INSTANTIATE(double)

#undef JDR_INSTANTIATE

}  // namespace jdr
