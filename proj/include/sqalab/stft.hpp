#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sqalab/fft.hpp"

namespace sqalab {

/// One-sided spectra of centered, Hann-windowed frames (n_fft/2 zeros padded
/// on both sides). frames[t][k], k in [0, n_fft/2].
using Spectrogram = std::vector<std::vector<Complex>>;

Spectrogram stft_centered(std::span<const double> x, std::size_t n_fft,
                          std::size_t hop);

/// Weighted overlap-add inverse of stft_centered, normalized by the summed
/// squared synthesis window. Returns exactly out_len samples.
std::vector<double> istft_centered(const Spectrogram& frames, std::size_t n_fft,
                                   std::size_t hop, std::size_t out_len);

}  // namespace sqalab
