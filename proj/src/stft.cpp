#include "sqalab/stft.hpp"

#include <algorithm>

#include "sqalab/error.hpp"
#include "sqalab/features.hpp"

namespace sqalab {

Spectrogram stft_centered(std::span<const double> x, std::size_t n_fft,
                          std::size_t hop) {
  if (hop == 0 || hop > n_fft) throw InvalidInputError("invalid STFT hop");
  const std::size_t pad = n_fft / 2;
  const std::size_t frames = 1 + x.size() / hop;
  const auto window = hann_window(n_fft);
  const Fft& plan = fft_plan(n_fft);
  const std::size_t bins = n_fft / 2 + 1;
  const auto len = static_cast<std::ptrdiff_t>(x.size());

  Spectrogram out(frames, std::vector<Complex>(bins));
  std::vector<Complex> buf(n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) -
                       static_cast<std::ptrdiff_t>(pad);
    for (std::size_t n = 0; n < n_fft; ++n) {
      const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(n);
      const double v = (idx >= 0 && idx < len) ? x[static_cast<std::size_t>(idx)] : 0.0;
      buf[n] = Complex(v * window[n], 0.0);
    }
    plan.forward(buf);
    std::copy_n(buf.begin(), bins, out[t].begin());
  }
  return out;
}

std::vector<double> istft_centered(const Spectrogram& frames, std::size_t n_fft,
                                   std::size_t hop, std::size_t out_len) {
  const std::size_t pad = n_fft / 2;
  const std::size_t bins = n_fft / 2 + 1;
  const auto window = hann_window(n_fft);
  const Fft& plan = fft_plan(n_fft);
  const std::size_t total = std::max(out_len + 2 * pad,
                                     frames.size() * hop + n_fft);
  std::vector<double> acc(total, 0.0);
  std::vector<double> norm(total, 0.0);
  std::vector<Complex> buf(n_fft);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& spec = frames[t];
    if (spec.size() != bins) throw InvalidInputError("STFT frame size mismatch");
    for (std::size_t k = 0; k < bins; ++k) buf[k] = spec[k];
    for (std::size_t k = bins; k < n_fft; ++k) buf[k] = std::conj(spec[n_fft - k]);
    plan.inverse(buf);
    const std::size_t start = t * hop;
    for (std::size_t n = 0; n < n_fft; ++n) {
      acc[start + n] += buf[n].real() * window[n];
      norm[start + n] += window[n] * window[n];
    }
  }
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double w = norm[i + pad];
    out[i] = w > 1e-10 ? acc[i + pad] / w : 0.0;
  }
  return out;
}

}  // namespace sqalab
