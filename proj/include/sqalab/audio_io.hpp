#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sqalab {

inline constexpr int kSampleRate = 16000;

/// Mono signal carrier used throughout the pipeline.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::string source_id;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Reads a RIFF/WAVE file (PCM16 or float32, any channel count) and averages
/// the channels to mono. The sample rate is kept as stored.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are hard-clipped to [-1, 1] and rounded
/// half away from zero.
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// Encodes the 16-bit PCM mono WAV byte stream that write_wav stores.
std::vector<unsigned char> encode_wav(const AudioClip& clip);
AudioClip decode_wav(std::span<const unsigned char> bytes,
                     std::string source_id = {});

/// Kaiser-windowed sinc resampling to target_rate.
AudioClip resample(const AudioClip& clip, int target_rate);

/// Band-limited interpolation of x at positions i * step, i in [0, out_len).
/// Used for arbitrary (irrational) ratios such as pitch shifting.
std::vector<float> resample_by_step(std::span<const float> x, double step,
                                    std::size_t out_len);

/// Crops to the first target_seconds, or repeats the clip cyclically until
/// it reaches that length.
AudioClip fix_duration(const AudioClip& clip, double target_seconds);
std::vector<float> fix_length(std::span<const float> samples,
                              std::size_t target_len);

/// read_wav followed by resampling to 16 kHz when needed.
AudioClip load_clip(const std::filesystem::path& path);

}  // namespace sqalab
