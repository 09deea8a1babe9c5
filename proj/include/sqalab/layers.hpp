#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sqalab/rng.hpp"
#include "sqalab/tensor.hpp"

namespace sqalab {

struct Conv2DSpec {
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const Conv2DSpec&) const = default;
};
struct BatchNorm2DSpec {
  bool operator==(const BatchNorm2DSpec&) const = default;
};
enum class ActivationKind { Relu, Silu };
struct ActivationSpec {
  ActivationKind kind = ActivationKind::Relu;
  bool operator==(const ActivationSpec&) const = default;
};
struct MaxPool2DSpec {
  std::size_t kernel_h = 2;
  std::size_t kernel_w = 2;
  std::size_t stride = 2;
  bool operator==(const MaxPool2DSpec&) const = default;
};
struct GlobalMaxPoolSpec {
  bool operator==(const GlobalMaxPoolSpec&) const = default;
};
struct DenseSpec {
  std::size_t out = 0;
  bool operator==(const DenseSpec&) const = default;
};
struct DropoutSpec {
  double p = 0.0;
  bool operator==(const DropoutSpec&) const = default;
};

using LayerSpec = std::variant<Conv2DSpec, BatchNorm2DSpec, ActivationSpec,
                               MaxPool2DSpec, GlobalMaxPoolSpec, DenseSpec,
                               DropoutSpec>;

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct RunContext {
  bool training = false;
  /// Dropout randomness; required when training.
  Rng* rng = nullptr;
};

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
};

/// One network stage with a hand-written backward pass.
///
/// backward() receives the input and output of the preceding training-mode
/// forward() call and returns the gradient with respect to that input,
/// accumulating parameter gradients into Parameter::grad.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;
  /// Output shape for an input shape; throws InvalidInputError on mismatch.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T>& in, const RunContext& ctx) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& in, const BasicTensor<T>& out,
                                  const BasicTensor<T>& grad_out) = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  /// Non-trainable persistent state (BatchNorm running statistics).
  virtual std::vector<std::pair<std::string, BasicTensor<T>*>> buffers() {
    return {};
  }
};

/// Builds a layer for an input of `in_shape` ([N, C, H, W] or [N, F]; N is
/// ignored). Parameters get Kaiming-uniform weights and zero biases.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& in_shape,
                                     const std::string& prefix, Rng& init_rng);

std::string layer_type(const LayerSpec& spec);

}  // namespace sqalab
