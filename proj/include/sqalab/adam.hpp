#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sqalab/layers.hpp"

namespace sqalab {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. `step` counts from 1.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamConfig& cfg);

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Parameter<T>*>& params);
  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace sqalab
