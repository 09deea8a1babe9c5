#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "sqalab/audio_io.hpp"

namespace sqalab {

/// Analysis framing shared by every spectral feature.
struct FramingConfig {
  double window_ms = 20.0;
  double hop_ms = 10.0;
  std::size_t fft_size = 512;
  int sample_rate = kSampleRate;

  std::size_t window_length() const;
  std::size_t hop_length() const;
  std::size_t bins() const { return fft_size / 2 + 1; }
  /// Number of full frames in a signal of `samples` length (0 if too short).
  std::size_t frame_count(std::size_t samples) const;
  void validate() const;
};

enum class FeatureKind : std::uint8_t { LogStft = 0, LogMel = 1, Mfcc = 2 };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view name);

inline constexpr double kLogFloor = 1e-8;
inline constexpr double kLogClamp = 7.0;
inline constexpr std::size_t kDefaultMelBands = 64;
inline constexpr std::size_t kMfccCoefficients = 12;

/// Row-major [frames x bins] time-frequency array.
struct SpectralFeature {
  std::vector<float> values;
  FeatureKind kind = FeatureKind::LogStft;
  std::size_t frames = 0;
  std::size_t bins = 0;
  FramingConfig framing;

  float at(std::size_t frame, std::size_t bin) const {
    return values[frame * bins + bin];
  }
  std::span<const float> frame(std::size_t f) const {
    return {values.data() + f * bins, bins};
  }
};

/// Un-logged one-sided magnitude spectra, [frames x (fft_size/2 + 1)].
std::vector<double> magnitude_spectrogram(const AudioClip& clip,
                                          const FramingConfig& cfg,
                                          std::size_t* frames_out = nullptr);

/// Periodic Hann window of the configured window length.
std::vector<double> hann_window(std::size_t length);

/// clamp(ln(v + 1e-8), -7, 7)
double log_compress(double magnitude);

SpectralFeature stft_log_magnitude(const AudioClip& clip,
                                   const FramingConfig& cfg = {});

/// Triangular filters on the HTK mel scale spanning 0 Hz to Nyquist.
class MelFilterbank {
 public:
  MelFilterbank(std::size_t bands, std::size_t fft_size, int sample_rate);

  std::size_t bands() const { return bands_; }
  /// Center frequency of each filter in Hz.
  const std::vector<double>& centers() const { return centers_; }
  /// Applies the filterbank to one magnitude frame.
  void apply(std::span<const double> magnitude, std::span<double> out) const;
  double weight(std::size_t band, std::size_t bin) const {
    return weights_[band * bins_ + bin];
  }

  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);

 private:
  std::size_t bands_;
  std::size_t bins_;
  std::vector<double> weights_;
  std::vector<double> centers_;
};

SpectralFeature mel_spectrogram(const AudioClip& clip,
                                const FramingConfig& cfg = {},
                                std::size_t mel_bands = kDefaultMelBands);

/// Orthonormal DCT-II keeping the first `keep` coefficients.
std::vector<double> dct2_orthonormal(std::span<const double> x,
                                     std::size_t keep);

/// 12 cepstral coefficients (c0..c11) per frame of the 64-band log-Mel.
SpectralFeature mfcc(const AudioClip& clip, const FramingConfig& cfg = {});

SpectralFeature compute_feature(const AudioClip& clip, FeatureKind kind,
                                const FramingConfig& cfg = {});

/// Binary dump: "SQFT", u32 version, u8 kind, u32 frames, u32 bins, f32 data.
void write_feature(const SpectralFeature& feature,
                   const std::filesystem::path& path);
SpectralFeature read_feature(const std::filesystem::path& path);

}  // namespace sqalab
