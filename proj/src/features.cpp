#include "sqalab/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "sqalab/error.hpp"
#include "sqalab/fft.hpp"

namespace sqalab {

std::size_t FramingConfig::window_length() const {
  return static_cast<std::size_t>(std::llround(window_ms * sample_rate / 1000.0));
}

std::size_t FramingConfig::hop_length() const {
  return static_cast<std::size_t>(std::llround(hop_ms * sample_rate / 1000.0));
}

std::size_t FramingConfig::frame_count(std::size_t samples) const {
  const std::size_t win = window_length();
  if (samples < win) return 0;
  return (samples - win) / hop_length() + 1;
}

void FramingConfig::validate() const {
  const std::size_t win = window_length();
  const std::size_t hop = hop_length();
  if (win == 0 || hop == 0 || !is_pow2(fft_size) || win > fft_size ||
      hop > win || sample_rate <= 0) {
    throw InvalidInputError("invalid framing configuration");
  }
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::LogStft: return "LogSTFT";
    case FeatureKind::LogMel: return "LogMel";
    case FeatureKind::Mfcc: return "MFCC";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(std::string_view name) {
  if (name == "LogSTFT" || name == "stft") return FeatureKind::LogStft;
  if (name == "LogMel" || name == "mel") return FeatureKind::LogMel;
  if (name == "MFCC" || name == "mfcc") return FeatureKind::Mfcc;
  throw InvalidInputError("unknown feature kind: " + std::string(name));
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  }
  return w;
}

double log_compress(double magnitude) {
  return std::clamp(std::log(magnitude + kLogFloor), -kLogClamp, kLogClamp);
}

std::vector<double> magnitude_spectrogram(const AudioClip& clip,
                                          const FramingConfig& cfg,
                                          std::size_t* frames_out) {
  cfg.validate();
  const std::size_t win = cfg.window_length();
  const std::size_t hop = cfg.hop_length();
  const std::size_t frames = cfg.frame_count(clip.size());
  if (frames == 0) {
    throw InvalidInputError("clip shorter than one analysis window");
  }
  const std::size_t bins = cfg.bins();
  const auto window = hann_window(win);
  const Fft& plan = fft_plan(cfg.fft_size);

  std::vector<double> mags(frames * bins);
  std::vector<Complex> buf(cfg.fft_size);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), Complex{});
    const float* seg = clip.samples.data() + f * hop;
    for (std::size_t n = 0; n < win; ++n) buf[n] = window[n] * seg[n];
    plan.forward(buf);
    for (std::size_t k = 0; k < bins; ++k) mags[f * bins + k] = std::abs(buf[k]);
  }
  if (frames_out) *frames_out = frames;
  return mags;
}

SpectralFeature stft_log_magnitude(const AudioClip& clip,
                                   const FramingConfig& cfg) {
  SpectralFeature out;
  const auto mags = magnitude_spectrogram(clip, cfg, &out.frames);
  out.kind = FeatureKind::LogStft;
  out.bins = cfg.bins();
  out.framing = cfg;
  out.values.resize(mags.size());
  for (std::size_t i = 0; i < mags.size(); ++i) {
    out.values[i] = static_cast<float>(log_compress(mags[i]));
  }
  return out;
}

double MelFilterbank::hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double MelFilterbank::mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFilterbank::MelFilterbank(std::size_t bands, std::size_t fft_size,
                             int sample_rate)
    : bands_(bands), bins_(fft_size / 2 + 1) {
  if (bands == 0) throw InvalidInputError("mel_bands must be >= 1");
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) /
                         static_cast<double>(bands + 1));
  }
  weights_.assign(bands * bins_, 0.0);
  centers_.resize(bands);
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  for (std::size_t m = 0; m < bands; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    centers_[m] = mid;
    for (std::size_t k = 0; k < bins_; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      weights_[m * bins_ + k] = w;
    }
  }
}

void MelFilterbank::apply(std::span<const double> magnitude,
                          std::span<double> out) const {
  for (std::size_t m = 0; m < bands_; ++m) {
    const double* w = weights_.data() + m * bins_;
    double acc = 0.0;
    for (std::size_t k = 0; k < bins_; ++k) acc += w[k] * magnitude[k];
    out[m] = acc;
  }
}

namespace {

std::vector<double> log_mel_matrix(const AudioClip& clip,
                                   const FramingConfig& cfg,
                                   std::size_t mel_bands,
                                   std::size_t* frames_out) {
  const MelFilterbank bank(mel_bands, cfg.fft_size, cfg.sample_rate);
  std::size_t frames = 0;
  const auto mags = magnitude_spectrogram(clip, cfg, &frames);
  const std::size_t bins = cfg.bins();
  std::vector<double> out(frames * mel_bands);
  for (std::size_t f = 0; f < frames; ++f) {
    std::span<double> row(out.data() + f * mel_bands, mel_bands);
    bank.apply({mags.data() + f * bins, bins}, row);
    for (auto& v : row) v = log_compress(v);
  }
  *frames_out = frames;
  return out;
}

}  // namespace

SpectralFeature mel_spectrogram(const AudioClip& clip,
                                const FramingConfig& cfg,
                                std::size_t mel_bands) {
  SpectralFeature out;
  const auto logmel = log_mel_matrix(clip, cfg, mel_bands, &out.frames);
  out.kind = FeatureKind::LogMel;
  out.bins = mel_bands;
  out.framing = cfg;
  out.values.assign(logmel.begin(), logmel.end());
  return out;
}

std::vector<double> dct2_orthonormal(std::span<const double> x,
                                     std::size_t keep) {
  const std::size_t n = x.size();
  keep = std::min(keep, n);
  std::vector<double> out(keep);
  const double s0 = std::sqrt(1.0 / n);
  const double s = std::sqrt(2.0 / n);
  for (std::size_t k = 0; k < keep; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi * (i + 0.5) * k / n);
    }
    out[k] = acc * (k == 0 ? s0 : s);
  }
  return out;
}

SpectralFeature mfcc(const AudioClip& clip, const FramingConfig& cfg) {
  const std::size_t bands = kDefaultMelBands;
  SpectralFeature out;
  const auto logmel = log_mel_matrix(clip, cfg, bands, &out.frames);

  // Basis is shared by every frame.
  std::vector<double> basis(kMfccCoefficients * bands);
  for (std::size_t k = 0; k < kMfccCoefficients; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / bands) : std::sqrt(2.0 / bands);
    for (std::size_t i = 0; i < bands; ++i) {
      basis[k * bands + i] =
          scale * std::cos(std::numbers::pi * (i + 0.5) * k / bands);
    }
  }
  out.kind = FeatureKind::Mfcc;
  out.bins = kMfccCoefficients;
  out.framing = cfg;
  out.values.resize(out.frames * kMfccCoefficients);
  for (std::size_t f = 0; f < out.frames; ++f) {
    const double* row = logmel.data() + f * bands;
    for (std::size_t k = 0; k < kMfccCoefficients; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < bands; ++i) acc += basis[k * bands + i] * row[i];
      out.values[f * kMfccCoefficients + k] = static_cast<float>(acc);
    }
  }
  return out;
}

SpectralFeature compute_feature(const AudioClip& clip, FeatureKind kind,
                                const FramingConfig& cfg) {
  switch (kind) {
    case FeatureKind::LogStft: return stft_log_magnitude(clip, cfg);
    case FeatureKind::LogMel: return mel_spectrogram(clip, cfg);
    case FeatureKind::Mfcc: return mfcc(clip, cfg);
  }
  throw InvalidInputError("unknown feature kind");
}

namespace {

constexpr std::uint32_t kFeatureVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
      static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw CorruptFileError("truncated feature file");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_feature(const SpectralFeature& feature,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("SQFT", 4);
  put_u32(out, kFeatureVersion);
  const auto kind = static_cast<char>(feature.kind);
  out.write(&kind, 1);
  put_u32(out, static_cast<std::uint32_t>(feature.frames));
  put_u32(out, static_cast<std::uint32_t>(feature.bins));
  for (float v : feature.values) {
    std::uint32_t raw;
    std::memcpy(&raw, &v, 4);
    put_u32(out, raw);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SpectralFeature read_feature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SQFT", 4) != 0) {
    throw FormatError("not a feature dump: " + path.string());
  }
  if (get_u32(in) != kFeatureVersion) {
    throw VersionError("unsupported feature dump version");
  }
  char kind;
  if (!in.read(&kind, 1) || static_cast<unsigned char>(kind) > 2) {
    throw CorruptFileError("bad feature kind");
  }
  SpectralFeature f;
  f.kind = static_cast<FeatureKind>(kind);
  f.frames = get_u32(in);
  f.bins = get_u32(in);
  f.values.resize(f.frames * f.bins);
  for (auto& v : f.values) {
    const std::uint32_t raw = get_u32(in);
    std::memcpy(&v, &raw, 4);
  }
  return f;
}

}  // namespace sqalab
