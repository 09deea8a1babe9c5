#include "sqalab/adam.hpp"

#include <cmath>

namespace sqalab {

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t step, const AdamConfig& cfg) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw InvalidInputError("adam state size mismatch");
  }
  if (step == 0) throw InvalidInputError("adam step counts from 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] = static_cast<T>(params[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw InvalidInputError("parameter list changed between steps");
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    adam_update<T>(p->value.values(), p->grad.values(), m_[i], v_[i], step_, cfg_);
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<double>,
                                 std::span<double>, std::uint64_t, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::uint64_t, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace sqalab
