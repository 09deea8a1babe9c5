#include "sqalab/model.hpp"

#include <algorithm>

namespace sqalab {

using nlohmann::json;

namespace {

bool is_head_layer(const LayerSpec& s) {
  return std::holds_alternative<DenseSpec>(s) || std::holds_alternative<ActivationSpec>(s) ||
         std::holds_alternative<DropoutSpec>(s);
}

// Propagates a [1, 1, frames, bins] shape through the encoder; false if any
// stage would be empty.
bool encoder_accepts(const ModelSpec& spec, std::size_t frames) {
  std::size_t h = frames, w = spec.input_bins;
  for (const auto& layer : spec.layers) {
    if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
      const std::size_t ph = h + 2 * c->padding, pw = w + 2 * c->padding;
      if (ph < c->kernel_h || pw < c->kernel_w) return false;
      h = (ph - c->kernel_h) / c->stride + 1;
      w = (pw - c->kernel_w) / c->stride + 1;
    } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
      if (h < p->kernel_h || w < p->kernel_w) return false;
      h = (h - p->kernel_h) / p->stride + 1;
      w = (w - p->kernel_w) / p->stride + 1;
    } else if (std::holds_alternative<GlobalMaxPoolSpec>(layer)) {
      return h > 0 && w > 0;
    }
  }
  return false;
}

std::size_t scaled(std::size_t channels, std::size_t divisor) {
  return std::max<std::size_t>(1, channels / divisor);
}

}  // namespace

void ModelSpec::validate() const {
  if (input_bins == 0) throw InvalidInputError("model input_bins must be positive");
  if (input_kind == FeatureKind::Mfcc) throw InvalidInputError("MFCC is not a model input");
  std::size_t pools = 0, gmp = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<GlobalMaxPoolSpec>(layers[i])) {
      ++pools;
      gmp = i;
    }
  }
  if (pools != 1) throw InvalidInputError("model needs exactly one GlobalMaxPool");
  bool has_conv = false;
  for (std::size_t i = 0; i < gmp; ++i) {
    if (std::holds_alternative<DenseSpec>(layers[i])) {
      throw InvalidInputError("dense layer before GlobalMaxPool");
    }
    has_conv = has_conv || std::holds_alternative<Conv2DSpec>(layers[i]);
  }
  if (!has_conv) throw InvalidInputError("model encoder has no convolution");
  for (std::size_t i = gmp + 1; i < layers.size(); ++i) {
    if (!is_head_layer(layers[i])) {
      throw InvalidInputError("only Dense/Activation/Dropout may follow GlobalMaxPool");
    }
  }
  const auto* last = std::get_if<DenseSpec>(&layers.back());
  if (last == nullptr || last->out != 1) throw InvalidInputError("final layer must be Dense(1)");
  if (!encoder_accepts(*this, 4096)) {
    throw InvalidInputError("encoder collapses the frequency axis for " +
                            std::to_string(input_bins) + " bins");
  }
}

std::size_t ModelSpec::global_pool_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<GlobalMaxPoolSpec>(layers[i])) return i;
  }
  throw InvalidInputError("model has no GlobalMaxPool");
}

std::size_t ModelSpec::latent_dim() const {
  const std::size_t gmp = global_pool_index();
  for (std::size_t i = gmp; i-- > 0;) {
    if (const auto* c = std::get_if<Conv2DSpec>(&layers[i])) return c->out_channels;
  }
  throw InvalidInputError("model encoder has no convolution");
}

std::size_t ModelSpec::min_frames() const {
  for (std::size_t f = 1; f <= 4096; ++f) {
    if (encoder_accepts(*this, f)) return f;
  }
  throw InvalidInputError("model accepts no frame count");
}

json spec_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& layer : spec.layers) {
    json j;
    j["type"] = layer_type(layer);
    if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
      j["out_channels"] = c->out_channels;
      j["kernel"] = {c->kernel_h, c->kernel_w};
      j["stride"] = c->stride;
      j["padding"] = c->padding;
    } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
      j["kernel"] = {p->kernel_h, p->kernel_w};
      j["stride"] = p->stride;
    } else if (const auto* d = std::get_if<DenseSpec>(&layer)) {
      j["out"] = d->out;
    } else if (const auto* dr = std::get_if<DropoutSpec>(&layer)) {
      j["p"] = dr->p;
    }
    layers.push_back(std::move(j));
  }
  return json{{"name", spec.name},
              {"input_kind", std::string(to_string(spec.input_kind))},
              {"input_bins", spec.input_bins},
              {"layers", std::move(layers)}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.input_kind = feature_kind_from_string(j.at("input_kind").get<std::string>());
    spec.input_bins = j.at("input_bins").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "conv2d") {
        Conv2DSpec c;
        c.out_channels = l.at("out_channels").get<std::size_t>();
        c.kernel_h = l.at("kernel").at(0).get<std::size_t>();
        c.kernel_w = l.at("kernel").at(1).get<std::size_t>();
        c.stride = l.at("stride").get<std::size_t>();
        c.padding = l.at("padding").get<std::size_t>();
        spec.layers.emplace_back(c);
      } else if (type == "batchnorm2d") {
        spec.layers.emplace_back(BatchNorm2DSpec{});
      } else if (type == "relu") {
        spec.layers.emplace_back(ActivationSpec{ActivationKind::Relu});
      } else if (type == "silu") {
        spec.layers.emplace_back(ActivationSpec{ActivationKind::Silu});
      } else if (type == "maxpool2d") {
        MaxPool2DSpec p;
        p.kernel_h = l.at("kernel").at(0).get<std::size_t>();
        p.kernel_w = l.at("kernel").at(1).get<std::size_t>();
        p.stride = l.at("stride").get<std::size_t>();
        spec.layers.emplace_back(p);
      } else if (type == "globalmaxpool") {
        spec.layers.emplace_back(GlobalMaxPoolSpec{});
      } else if (type == "dense") {
        spec.layers.emplace_back(DenseSpec{l.at("out").get<std::size_t>()});
      } else if (type == "dropout") {
        spec.layers.emplace_back(DropoutSpec{l.at("p").get<double>()});
      } else {
        throw VersionError("unknown layer type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model spec: ") + e.what());
  }
  return spec;
}

ModelSpec dnsmos_spec(std::size_t width_divisor, std::size_t mel_bands) {
  if (width_divisor == 0) throw InvalidInputError("width divisor must be positive");
  const std::size_t c32 = scaled(32, width_divisor), c64 = scaled(64, width_divisor);
  ModelSpec spec;
  spec.name = "dnsmos";
  spec.input_kind = FeatureKind::LogMel;
  spec.input_bins = mel_bands;
  auto& L = spec.layers;
  for (int i = 0; i < 3; ++i) {
    L.emplace_back(Conv2DSpec{c32, 3, 3, 1, 1});
    L.emplace_back(ActivationSpec{ActivationKind::Relu});
    L.emplace_back(MaxPool2DSpec{2, 2, 2});
  }
  L.emplace_back(Conv2DSpec{c64, 3, 3, 1, 1});
  L.emplace_back(ActivationSpec{ActivationKind::Relu});
  L.emplace_back(GlobalMaxPoolSpec{});
  L.emplace_back(DenseSpec{c64});
  L.emplace_back(ActivationSpec{ActivationKind::Relu});
  L.emplace_back(DropoutSpec{0.2});
  L.emplace_back(DenseSpec{c64});
  L.emplace_back(ActivationSpec{ActivationKind::Relu});
  L.emplace_back(DenseSpec{1});
  spec.validate();
  return spec;
}

ModelSpec dnsmos_plus_custom(const std::vector<std::size_t>& conv_channels, std::size_t hidden,
                             std::size_t input_bins) {
  if (conv_channels.size() != 5) throw InvalidInputError("DNSMOS+ needs five conv widths");
  ModelSpec spec;
  spec.name = "dnsmos_plus";
  spec.input_kind = FeatureKind::LogStft;
  spec.input_bins = input_bins;
  auto& L = spec.layers;
  auto block = [&](std::size_t ch) {
    L.emplace_back(Conv2DSpec{ch, 3, 3, 1, 1});
    L.emplace_back(BatchNorm2DSpec{});
    L.emplace_back(ActivationSpec{ActivationKind::Silu});
  };
  block(conv_channels[0]);
  block(conv_channels[1]);
  L.emplace_back(MaxPool2DSpec{3, 3, 2});
  block(conv_channels[2]);
  block(conv_channels[3]);
  L.emplace_back(MaxPool2DSpec{3, 3, 2});
  block(conv_channels[4]);
  L.emplace_back(GlobalMaxPoolSpec{});
  L.emplace_back(DenseSpec{hidden});
  L.emplace_back(ActivationSpec{ActivationKind::Silu});
  L.emplace_back(DenseSpec{1});
  spec.validate();
  return spec;
}

ModelSpec dnsmos_plus_spec(std::size_t width_divisor, std::size_t input_bins) {
  if (width_divisor == 0) throw InvalidInputError("width divisor must be positive");
  const auto s = [&](std::size_t c) { return scaled(c, width_divisor); };
  return dnsmos_plus_custom({s(32), s(32), s(64), s(64), s(128)}, s(64), input_bins);
}

ModelSpec model_spec_by_name(const std::string& name, std::size_t width_divisor) {
  if (name == "dnsmos") return dnsmos_spec(width_divisor);
  if (name == "dnsmos_plus" || name == "dnsmos+") return dnsmos_plus_spec(width_divisor);
  throw ConfigError("unknown model '" + name + "' (expected dnsmos or dnsmos_plus)");
}

// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(derive_seed(init_seed, "init/" + spec_.name));
  Shape shape{1, 1, spec_.min_frames(), spec_.input_bins};
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    auto layer = make_layer<T>(spec_.layers[i], shape, "layers." + std::to_string(i), rng);
    shape = layer->output_shape(shape);
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
Shape Model<T>::check_input(const Shape& dims) const {
  if (dims.size() != 4 || dims[1] != 1 || dims[3] != spec_.input_bins) {
    throw InvalidInputError("model expects [N, 1, frames, " + std::to_string(spec_.input_bins) +
                            "] input, got " + shape_string(dims));
  }
  if (dims[0] == 0) throw InvalidInputError("empty batch");
  if (dims[2] < spec_.min_frames()) {
    throw InvalidInputError("input has " + std::to_string(dims[2]) + " frames; model needs " +
                            std::to_string(spec_.min_frames()));
  }
  return dims;
}

template <typename T>
ModelOutput<T> Model<T>::forward(const BasicTensor<T>& input, const RunContext& ctx) {
  check_input(input.dims());
  const std::size_t gmp = spec_.global_pool_index();
  ModelOutput<T> result;
  acts_.clear();
  if (ctx.training) {
    acts_.reserve(layers_.size() + 1);
    acts_.push_back(input);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      acts_.push_back(layers_[i]->forward(acts_.back(), ctx));
    }
    result.latent = acts_[gmp + 1];
    result.mos = acts_.back();
  } else {
    BasicTensor<T> x = layers_[0]->forward(input, ctx);
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      x = layers_[i]->forward(x, ctx);
      if (i == gmp) result.latent = x;
    }
    if (gmp == 0) result.latent = x;
    result.mos = std::move(x);
  }
  return result;
}

template <typename T>
BasicTensor<T> Model<T>::backward(const BasicTensor<T>& grad_mos) {
  if (acts_.size() != layers_.size() + 1) {
    throw InvalidInputError("backward() requires a preceding training-mode forward()");
  }
  if (grad_mos.dims() != acts_.back().dims()) {
    throw InvalidInputError("gradient shape " + shape_string(grad_mos.dims()) +
                            " does not match output " + shape_string(acts_.back().dims()));
  }
  BasicTensor<T> grad = grad_mos;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    grad = layers_[i]->backward(acts_[i], acts_[i + 1], grad);
    // Activations are no longer needed once consumed.
    acts_[i + 1] = BasicTensor<T>();
  }
  acts_.clear();
  return grad;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T{0});
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>*>> Model<T>::named_tensors() {
  std::vector<std::pair<std::string, BasicTensor<T>*>> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->parameters()) out.emplace_back(p->name, &p->value);
    for (auto& b : layer->buffers()) out.push_back(b);
  }
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
std::pair<double, std::vector<float>> Model<T>::infer(const SpectralFeature& feature) {
  if (feature.kind != spec_.input_kind) {
    throw InvalidInputError("model expects " + std::string(to_string(spec_.input_kind)) +
                            " features, got " + std::string(to_string(feature.kind)));
  }
  BasicTensor<T> input({1, 1, feature.frames, feature.bins},
                       std::vector<T>(feature.values.begin(), feature.values.end()));
  auto out = forward(input, RunContext{});
  return {static_cast<double>(out.mos[0]),
          std::vector<float>(out.latent.values().begin(), out.latent.values().end())};
}

template class Model<float>;
template class Model<double>;

Tensor feature_batch(const std::vector<const SpectralFeature*>& features) {
  if (features.empty()) throw InvalidInputError("empty feature batch");
  const std::size_t frames = features[0]->frames, bins = features[0]->bins;
  Tensor out({features.size(), 1, frames, bins});
  for (std::size_t n = 0; n < features.size(); ++n) {
    const auto& f = *features[n];
    if (f.frames != frames || f.bins != bins) {
      throw InvalidInputError("features in one batch must share their shape");
    }
    std::copy(f.values.begin(), f.values.end(), out.data() + n * frames * bins);
  }
  return out;
}

}  // namespace sqalab
