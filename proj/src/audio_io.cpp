#include "sqalab/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "sqalab/error.hpp"

namespace sqalab {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
  }
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::int16_t quantize(float x) {
  double v = std::clamp(static_cast<double>(x), -1.0, 1.0) * 32768.0;
  v = std::round(v);  // half away from zero
  v = std::clamp(v, -32768.0, 32767.0);
  return static_cast<std::int16_t>(v);
}

// Zeroth-order modified Bessel function of the first kind.
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

constexpr double kKaiserBeta = 8.6;
constexpr int kZeroCrossings = 32;  // per side; 64 taps at the lower rate
constexpr double kRolloff = 0.9;
constexpr int kTableResolution = 1024;

// Windowed-sinc prototype sampled on a fine grid, indexed by distance in
// lower-rate sample periods.
class KernelTable {
 public:
  KernelTable() : values_(kZeroCrossings * kTableResolution + 2) {
    const double i0_beta = bessel_i0(kKaiserBeta);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double t = static_cast<double>(i) / kTableResolution;
      values_[i] = evaluate(t, i0_beta);
    }
  }

  static double evaluate(double t, double i0_beta) {
    if (t >= kZeroCrossings) return 0.0;
    const double x = kRolloff * t;
    const double sinc =
        x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double r = t / kZeroCrossings;
    const double window = bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
    return sinc * window;
  }

  double at(double t) const {
    t = std::abs(t);
    if (t >= kZeroCrossings) return 0.0;
    const double pos = t * kTableResolution;
    const auto idx = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(idx);
    return values_[idx] + frac * (values_[idx + 1] - values_[idx]);
  }

 private:
  std::vector<double> values_;
};

const KernelTable& kernel_table() {
  static const KernelTable table;
  return table;
}

// Weighted sum around input position `pos` with the prototype stretched by
// `scale` (< 1 when decimating). Weights are normalized to unit DC gain.
double interpolate_at(std::span<const float> x, double pos, double scale,
                      const KernelTable& table) {
  const double half_width = kZeroCrossings / scale;
  const auto first = static_cast<std::int64_t>(std::ceil(pos - half_width));
  const auto last = static_cast<std::int64_t>(std::floor(pos + half_width));
  const auto n = static_cast<std::int64_t>(x.size());
  double acc = 0.0;
  double weight_sum = 0.0;
  for (std::int64_t k = first; k <= last; ++k) {
    const double w = table.at((static_cast<double>(k) - pos) * scale);
    weight_sum += w;
    if (k >= 0 && k < n) acc += w * x[static_cast<std::size_t>(k)];
  }
  return weight_sum != 0.0 ? acc / weight_sum : 0.0;
}

}  // namespace

std::vector<unsigned char> encode_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw InvalidInputError("sample rate not set");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : clip.samples) {
    put_u16(out, static_cast<std::uint16_t>(quantize(s)));
  }
  return out;
}

AudioClip decode_wav(std::span<const unsigned char> bytes,
                     std::string source_id) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + source_id);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > available) {
        throw FormatError("truncated fmt chunk: " + source_id);
      }
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible && size >= 26) {
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      // Streamed files may carry an oversized length; keep what exists.
      data = bytes.data() + body;
      data_size = std::min(size, available);
      break;
    }
    if (size > available) break;
    pos = body + size + (size & 1);
  }
  if (!have_fmt || data == nullptr) {
    throw FormatError("missing fmt or data chunk: " + source_id);
  }
  if (channels == 0 || rate == 0) {
    throw FormatError("invalid channel count or rate: " + source_id);
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw UnsupportedError("unsupported WAV encoding (format " +
                           std::to_string(format) + ", " +
                           std::to_string(bits) + " bits): " + source_id);
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = std::move(source_id);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        const std::uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, 4);
        acc += v;
      }
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate <= 0 || target_rate <= 0) {
    throw InvalidInputError("sample rates must be positive");
  }
  if (clip.sample_rate == target_rate) return clip;

  const auto source = static_cast<std::int64_t>(clip.sample_rate);
  const auto target = static_cast<std::int64_t>(target_rate);
  const std::int64_t g = std::gcd(source, target);
  const std::int64_t up = target / g;    // phases
  const std::int64_t down = source / g;  // input advance per `up` outputs
  const auto in_len = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t out_len = (in_len * target + source / 2) / source;
  const double scale = std::min(1.0, static_cast<double>(target) / source);
  const double half_width = kZeroCrossings / scale;
  const auto& table = kernel_table();

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.resize(static_cast<std::size_t>(out_len));

  if (up <= 4096) {
    // Polyphase: one normalized coefficient set per output phase.
    const auto taps = static_cast<std::int64_t>(2 * std::ceil(half_width) + 1);
    std::vector<std::vector<double>> phases(static_cast<std::size_t>(up));
    for (std::int64_t p = 0; p < up; ++p) {
      auto& coeffs = phases[static_cast<std::size_t>(p)];
      coeffs.resize(static_cast<std::size_t>(taps));
      const double frac = static_cast<double>(p) / up;
      const std::int64_t offset = taps / 2;
      double sum = 0.0;
      for (std::int64_t t = 0; t < taps; ++t) {
        const double dist = static_cast<double>(t - offset) - frac;
        coeffs[static_cast<std::size_t>(t)] =
            std::abs(dist) < half_width ? table.at(dist * scale) : 0.0;
        sum += coeffs[static_cast<std::size_t>(t)];
      }
      for (auto& c : coeffs) c /= sum;
    }
    const std::int64_t offset = taps / 2;
    for (std::int64_t i = 0; i < out_len; ++i) {
      const std::int64_t num = i * down;
      const std::int64_t base = num / up;
      const auto& coeffs = phases[static_cast<std::size_t>(num % up)];
      double acc = 0.0;
      for (std::int64_t t = 0; t < taps; ++t) {
        const std::int64_t k = base + t - offset;
        if (k >= 0 && k < in_len) {
          acc += coeffs[static_cast<std::size_t>(t)] *
                 clip.samples[static_cast<std::size_t>(k)];
        }
      }
      out.samples[static_cast<std::size_t>(i)] = static_cast<float>(acc);
    }
  } else {
    const double step = static_cast<double>(source) / target;
    out.samples = resample_by_step(clip.samples, step,
                                   static_cast<std::size_t>(out_len));
  }
  return out;
}

std::vector<float> resample_by_step(std::span<const float> x, double step,
                                    std::size_t out_len) {
  if (!(step > 0.0)) throw InvalidInputError("resample step must be positive");
  const double scale = std::min(1.0, 1.0 / step);
  const auto& table = kernel_table();
  std::vector<float> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    out[i] = static_cast<float>(
        interpolate_at(x, static_cast<double>(i) * step, scale, table));
  }
  return out;
}

std::vector<float> fix_length(std::span<const float> samples,
                              std::size_t target_len) {
  if (samples.empty()) throw InvalidInputError("cannot fix length of empty clip");
  std::vector<float> out(target_len);
  for (std::size_t i = 0; i < target_len; ++i) {
    out[i] = samples[i % samples.size()];
  }
  return out;
}

AudioClip fix_duration(const AudioClip& clip, double target_seconds) {
  if (clip.empty()) throw InvalidInputError("cannot fix duration of empty clip");
  const auto target_len =
      static_cast<std::size_t>(std::llround(target_seconds * clip.sample_rate));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples = fix_length(clip.samples, target_len);
  return out;
}

AudioClip load_clip(const std::filesystem::path& path) {
  AudioClip clip = read_wav(path);
  if (clip.sample_rate != kSampleRate) clip = resample(clip, kSampleRate);
  return clip;
}

}  // namespace sqalab
