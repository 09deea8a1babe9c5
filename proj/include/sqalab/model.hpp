#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqalab/features.hpp"
#include "sqalab/layers.hpp"

namespace sqalab {

/// Architecture descriptor. Input tensors are [N, 1, frames, input_bins].
struct ModelSpec {
  std::string name;
  FeatureKind input_kind = FeatureKind::LogStft;
  std::size_t input_bins = 257;
  std::vector<LayerSpec> layers;

  /// Throws InvalidInputError when the layer list breaks the structural rules.
  void validate() const;
  std::size_t global_pool_index() const;
  std::size_t latent_dim() const;
  /// Smallest frame count the pooling stack accepts.
  std::size_t min_frames() const;
  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json spec_to_json(const ModelSpec& spec);
/// Unknown layer types raise VersionError; malformed fields raise FormatError.
ModelSpec spec_from_json(const nlohmann::json& j);

/// Channel widths are divided by `width_divisor` (1 = full size).
ModelSpec dnsmos_spec(std::size_t width_divisor = 1, std::size_t mel_bands = kDefaultMelBands);
ModelSpec dnsmos_plus_spec(std::size_t width_divisor = 1, std::size_t input_bins = 257);
/// DNSMOS+ topology with explicit widths: five conv channel counts and the
/// hidden dense width.
ModelSpec dnsmos_plus_custom(const std::vector<std::size_t>& conv_channels,
                             std::size_t hidden, std::size_t input_bins);
/// Resolves "dnsmos" / "dnsmos_plus".
ModelSpec model_spec_by_name(const std::string& name, std::size_t width_divisor = 1);

template <typename T>
struct ModelOutput {
  BasicTensor<T> mos;     // [N, 1]
  BasicTensor<T> latent;  // [N, latent_dim]
};

template <typename T>
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t init_seed);

  const ModelSpec& spec() const { return spec_; }

  /// Runs the stack. In training mode every activation is kept for backward().
  ModelOutput<T> forward(const BasicTensor<T>& input, const RunContext& ctx);
  /// Gradient of the loss w.r.t. the input, given dLoss/dmos of shape [N, 1].
  /// Accumulates into parameter gradients.
  BasicTensor<T> backward(const BasicTensor<T>& grad_mos);

  void zero_grad();
  std::vector<Parameter<T>*> parameters();
  /// Parameters followed by buffers, in layer order, with checkpoint names.
  std::vector<std::pair<std::string, BasicTensor<T>*>> named_tensors();
  std::size_t parameter_count();

  /// Inference on one feature.
  std::pair<double, std::vector<float>> infer(const SpectralFeature& feature);

 private:
  Shape check_input(const Shape& dims) const;

  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<BasicTensor<T>> acts_;
};

/// Stacks equally sized features into a [N, 1, frames, bins] tensor.
Tensor feature_batch(const std::vector<const SpectralFeature*>& features);

}  // namespace sqalab
