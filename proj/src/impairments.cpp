#include "sqalab/impairments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sqalab/error.hpp"
#include "sqalab/fft.hpp"
#include "sqalab/stft.hpp"

namespace sqalab {
namespace {

constexpr ParamRange kNoiseRanges[] = {{"snr_db", -10.0, 15.0}};
constexpr ParamRange kClippingRanges[] = {{"percentile", 10.0, 40.0}};
constexpr ParamRange kGainRanges[] = {{"gain_db", -60.0, 20.0},
                                      {"ramp_start_frac", 0.0, 0.5},
                                      {"ramp_len_frac", 0.1, 0.5}};
constexpr ParamRange kLowPassRanges[] = {{"cutoff_hz", 500.0, 1000.0}};
constexpr ParamRange kCodecRanges[] = {{"bit_rate", 8.0, 14.0}};
constexpr ParamRange kPitchRanges[] = {{"semitones", -4.0, 4.0}};
constexpr ParamRange kRoomRanges[] = {{"rt60_s", 0.8, 1.5}};
constexpr ParamRange kTimeMaskRanges[] = {{"band_part", 0.2, 0.5}};
constexpr ParamRange kStretchRanges[] = {{"rate", 0.5, 2.0}};

std::vector<double> to_double(std::span<const float> x) {
  return {x.begin(), x.end()};
}

AudioClip with_samples(const AudioClip& like, std::span<const double> x) {
  AudioClip out;
  out.sample_rate = like.sample_rate;
  out.source_id = like.source_id;
  out.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.samples[i] = static_cast<float>(x[i]);
  return out;
}

double peak(std::span<const float> x) {
  double p = 0.0;
  for (float v : x) p = std::max(p, static_cast<double>(std::abs(v)));
  return p;
}

double peak(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

void scale_to_peak(std::vector<double>& x, double target_peak) {
  const double p = peak(x);
  if (p <= 0.0) return;
  const double g = target_peak / p;
  for (auto& v : x) v *= g;
}

void require_rate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw InvalidInputError("clip has no sample rate");
}

}  // namespace

std::string_view class_name(ImpairmentClass cls) {
  switch (cls) {
    case ImpairmentClass::Identity: return "Identity";
    case ImpairmentClass::AddBackgroundNoise: return "AddBackgroundNoise";
    case ImpairmentClass::ClippingImpairment: return "ClippingImpairment";
    case ImpairmentClass::GainTransition: return "GainTransition";
    case ImpairmentClass::LowPassFilter: return "LowPassFilter";
    case ImpairmentClass::CodecCompression: return "CodecCompression";
    case ImpairmentClass::PitchShift: return "PitchShift";
    case ImpairmentClass::RoomSimulator: return "RoomSimulator";
    case ImpairmentClass::TimeMask: return "TimeMask";
    case ImpairmentClass::TimeStretch: return "TimeStretch";
  }
  return "unknown";
}

ImpairmentClass impairment_class_from_name(std::string_view name) {
  for (auto cls : kSingleClasses) {
    if (class_name(cls) == name) return cls;
  }
  throw InvalidInputError("unknown impairment class: " + std::string(name));
}

std::span<const ParamRange> param_ranges(ImpairmentClass cls) {
  switch (cls) {
    case ImpairmentClass::Identity: return {};
    case ImpairmentClass::AddBackgroundNoise: return kNoiseRanges;
    case ImpairmentClass::ClippingImpairment: return kClippingRanges;
    case ImpairmentClass::GainTransition: return kGainRanges;
    case ImpairmentClass::LowPassFilter: return kLowPassRanges;
    case ImpairmentClass::CodecCompression: return kCodecRanges;
    case ImpairmentClass::PitchShift: return kPitchRanges;
    case ImpairmentClass::RoomSimulator: return kRoomRanges;
    case ImpairmentClass::TimeMask: return kTimeMaskRanges;
    case ImpairmentClass::TimeStretch: return kStretchRanges;
  }
  return {};
}

double ImpairmentSpec::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw InvalidInputError(std::string(class_name(cls)) +
                            " is missing parameter " + name);
  }
  return it->second;
}

std::string CompositeLabel::class_name() const {
  std::string name;
  for (const auto& spec : specs) {
    if (!name.empty()) name += '+';
    name += sqalab::class_name(spec.cls);
  }
  return name;
}

void CompositeLabel::validate() const {
  if (specs.size() == 1) return;
  if (specs.size() == 2) {
    for (const auto& pair : kPairClasses) {
      if (pair[0] == specs[0].cls && pair[1] == specs[1].cls) return;
    }
  }
  throw InvalidInputError("not an allowed impairment composite: " + class_name());
}

std::vector<std::string> class_universe() {
  std::vector<std::string> names;
  for (auto cls : kSingleClasses) names.emplace_back(class_name(cls));
  for (const auto& pair : kPairClasses) {
    names.push_back(std::string(class_name(pair[0])) + "+" +
                    std::string(class_name(pair[1])));
  }
  return names;
}

ImpairmentSpec sample_impairment(ImpairmentClass cls, Rng& rng,
                                 std::span<const std::string> noise_ids) {
  ImpairmentSpec spec;
  spec.cls = cls;
  for (const auto& range : param_ranges(cls)) {
    spec.params[std::string(range.name)] = rng.uniform(range.lo, range.hi);
  }
  if (cls == ImpairmentClass::TimeMask) {
    spec.params["start_frac"] = rng.uniform(0.0, 1.0 - spec.params["band_part"]);
  }
  if (cls == ImpairmentClass::AddBackgroundNoise) {
    if (noise_ids.empty()) {
      throw InvalidInputError("AddBackgroundNoise requires a noise corpus");
    }
    spec.noise_source_id = noise_ids[rng.below(noise_ids.size())];
  }
  return spec;
}

double rms(std::span<const float> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double noise_gain(double clip_rms, double noise_rms, double snr_db) {
  return clip_rms / (noise_rms * std::pow(10.0, snr_db / 20.0));
}

AudioClip add_background_noise(const AudioClip& clip, const AudioClip& noise,
                               double snr_db, std::size_t noise_offset) {
  require_rate(clip);
  if (noise.sample_rate != clip.sample_rate) {
    throw InvalidInputError("noise and clip sample rates differ");
  }
  if (noise.empty() || rms(noise.samples) <= 1e-6) {
    throw InvalidInputError("background noise is silent");
  }
  std::vector<float> fitted(clip.size());
  for (std::size_t i = 0; i < fitted.size(); ++i) {
    fitted[i] = noise.samples[(noise_offset + i) % noise.size()];
  }
  const double noise_rms = rms(fitted);
  if (noise_rms <= 1e-6) throw InvalidInputError("background noise is silent");
  const double g = noise_gain(rms(clip.samples), noise_rms, snr_db);
  AudioClip out = clip;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.samples[i] = static_cast<float>(clip.samples[i] + g * fitted[i]);
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidInputError("percentile of empty sequence");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

AudioClip clip_percentile(const AudioClip& clip, double percentile_value) {
  if (!(percentile_value >= 0.0 && percentile_value < 100.0)) {
    throw InvalidInputError("clipping percentile must lie in [0, 100)");
  }
  if (clip.empty()) return clip;
  std::vector<double> mags(clip.size());
  for (std::size_t i = 0; i < clip.size(); ++i) mags[i] = std::abs(clip.samples[i]);
  const double t = percentile(std::move(mags), 100.0 - percentile_value);
  AudioClip out = clip;
  for (auto& v : out.samples) {
    v = static_cast<float>(std::clamp(static_cast<double>(v), -t, t));
  }
  return out;
}

double gain_transition_db(std::size_t i, std::size_t length, double gain_db,
                          double ramp_start_frac, double ramp_len_frac) {
  const double start = ramp_start_frac * static_cast<double>(length);
  const double end = start + ramp_len_frac * static_cast<double>(length);
  const double pos = static_cast<double>(i);
  if (pos < start) return 0.0;
  if (pos >= end) return gain_db;
  return gain_db * (pos - start) / (end - start);
}

AudioClip gain_transition(const AudioClip& clip, double gain_db,
                          double ramp_start_frac, double ramp_len_frac) {
  if (ramp_start_frac < 0.0 || ramp_len_frac < 0.0 ||
      ramp_start_frac + ramp_len_frac > 1.0 + 1e-12) {
    throw InvalidInputError("gain ramp must lie inside the clip");
  }
  AudioClip out = clip;
  if (gain_db == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double db =
        gain_transition_db(i, clip.size(), gain_db, ramp_start_frac, ramp_len_frac);
    out.samples[i] = static_cast<float>(clip.samples[i] * std::pow(10.0, db / 20.0));
  }
  return out;
}

Biquad butterworth_lowpass(double cutoff_hz, int sample_rate) {
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate / 2.0)) {
    throw InvalidInputError("low-pass cutoff must lie in (0, Nyquist)");
  }
  // Bilinear transform with frequency prewarping.
  const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate);
  const double k2 = k * k;
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
  Biquad q;
  q.b0 = k2 * norm;
  q.b1 = 2.0 * q.b0;
  q.b2 = q.b0;
  q.a1 = 2.0 * (k2 - 1.0) * norm;
  q.a2 = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
  return q;
}

namespace {

std::vector<double> run_biquad(const Biquad& q, std::span<const double> x) {
  std::vector<double> y(x.size());
  double z1 = 0.0, z2 = 0.0;  // transposed direct form II
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double out = q.b0 * x[i] + z1;
    z1 = q.b1 * x[i] - q.a1 * out + z2;
    z2 = q.b2 * x[i] - q.a2 * out;
    y[i] = out;
  }
  return y;
}

}  // namespace

AudioClip low_pass_filter(const AudioClip& clip, double cutoff_hz) {
  require_rate(clip);
  const Biquad q = butterworth_lowpass(cutoff_hz, clip.sample_rate);
  const auto y = run_biquad(q, to_double(clip.samples));
  return with_samples(clip, y);
}

double codec_bandwidth_hz(double bit_rate) { return 2000.0 + 250.0 * (bit_rate - 8.0); }

double codec_quant_step(double bit_rate) { return 0.5 * (15.0 - bit_rate) / 7.0; }

AudioClip codec_compress(const AudioClip& clip, double bit_rate) {
  require_rate(clip);
  if (clip.empty()) return clip;
  constexpr std::size_t kFrame = 512;
  constexpr std::size_t kHop = 128;
  const double input_peak = peak(clip.samples);
  const AudioClip limited = low_pass_filter(clip, codec_bandwidth_hz(bit_rate));
  const double step = codec_quant_step(bit_rate);

  auto spec = stft_centered(to_double(limited.samples), kFrame, kHop);
  for (auto& frame : spec) {
    for (auto& bin : frame) {
      const double mag = std::abs(bin);
      if (mag <= 0.0) continue;
      const double quantized = step * std::round(std::log(mag) / step);
      bin *= std::exp(quantized) / mag;
    }
  }
  auto y = istft_centered(spec, kFrame, kHop, clip.size());
  scale_to_peak(y, input_peak);
  return with_samples(clip, y);
}

std::vector<float> phase_vocoder_stretch(std::span<const float> x, double rate,
                                         std::size_t n_fft, std::size_t hop) {
  if (!(rate > 0.0)) throw InvalidInputError("stretch rate must be positive");
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) / rate));
  if (x.empty()) return {};
  const auto spec = stft_centered(to_double(x), n_fft, hop);
  const std::size_t frames = spec.size();
  const std::size_t bins = n_fft / 2 + 1;

  std::vector<double> expected_advance(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    expected_advance[k] = 2.0 * std::numbers::pi * static_cast<double>(k) *
                          static_cast<double>(hop) / static_cast<double>(n_fft);
  }
  std::vector<double> phase(bins);
  for (std::size_t k = 0; k < bins; ++k) phase[k] = std::arg(spec[0][k]);

  const std::vector<Complex> silent(bins);
  Spectrogram stretched;
  for (std::size_t step = 0;; ++step) {
    const double t = static_cast<double>(step) * rate;
    if (t >= static_cast<double>(frames)) break;
    const auto left = static_cast<std::size_t>(t);
    const double alpha = t - static_cast<double>(left);
    const auto& a = spec[left];
    const auto& b = left + 1 < frames ? spec[left + 1] : silent;
    std::vector<Complex> frame(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag = (1.0 - alpha) * std::abs(a[k]) + alpha * std::abs(b[k]);
      frame[k] = std::polar(mag, phase[k]);
      double delta = std::arg(b[k]) - std::arg(a[k]) - expected_advance[k];
      delta -= 2.0 * std::numbers::pi * std::round(delta / (2.0 * std::numbers::pi));
      phase[k] += expected_advance[k] + delta;
    }
    stretched.push_back(std::move(frame));
  }
  const auto y = istft_centered(stretched, n_fft, hop, out_len);
  return {y.begin(), y.end()};
}

AudioClip pitch_shift(const AudioClip& clip, double semitones) {
  if (!(semitones >= -12.0 && semitones <= 12.0)) {
    throw InvalidInputError("pitch shift must lie within one octave");
  }
  if (semitones == 0.0 || clip.empty()) return clip;
  const double ratio = std::pow(2.0, semitones / 12.0);
  const auto stretched = phase_vocoder_stretch(clip.samples, 1.0 / ratio);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  // Reading the stretched signal `ratio` times faster restores the duration;
  // positions past its end read as silence, so the length matches exactly.
  out.samples = resample_by_step(stretched, ratio, clip.size());
  return out;
}

AudioClip time_stretch(const AudioClip& clip, double rate) {
  if (!(rate >= 0.25 && rate <= 4.0)) {
    throw InvalidInputError("time stretch rate must lie in [0.25, 4]");
  }
  if (clip.empty()) return clip;
  const auto stretched = phase_vocoder_stretch(clip.samples, rate);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_id = clip.source_id;
  out.samples = fix_length(stretched, clip.size());
  return out;
}

std::vector<double> synthesize_rir(double rt60_s, int sample_rate,
                                   std::uint64_t seed) {
  if (!(rt60_s > 0.0)) throw InvalidInputError("rt60 must be positive");
  const auto length = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(1.5 * rt60_s * sample_rate)));
  const double decay = 3.0 * std::log(10.0) / (rt60_s * sample_rate);
  Rng rng(seed);
  std::vector<double> h(length);
  for (std::size_t n = 0; n < length; ++n) {
    h[n] = std::exp(-decay * static_cast<double>(n)) * rng.normal();
  }
  h[0] = 1.0;
  const double p = peak(h);
  for (auto& v : h) v /= p;
  return h;
}

AudioClip room_simulate(const AudioClip& clip, double rt60_s,
                        std::uint64_t rng_seed) {
  require_rate(clip);
  if (clip.empty()) return clip;
  const auto h = synthesize_rir(rt60_s, clip.sample_rate, rng_seed);
  auto y = fft_convolve(to_double(clip.samples), h);
  y.resize(clip.size());
  scale_to_peak(y, peak(clip.samples));
  return with_samples(clip, y);
}

AudioClip time_mask(const AudioClip& clip, double band_part, double start_frac) {
  if (!(band_part > 0.0 && band_part < 1.0) || start_frac < 0.0 ||
      start_frac + band_part > 1.0 + 1e-12) {
    throw InvalidInputError("time mask must lie inside the clip");
  }
  const std::size_t len = clip.size();
  const auto mask_len = std::min<std::size_t>(
      len, static_cast<std::size_t>(std::llround(band_part * static_cast<double>(len))));
  const std::size_t start = std::min<std::size_t>(
      len - mask_len,
      static_cast<std::size_t>(std::llround(start_frac * static_cast<double>(len))));
  const auto fade_len = std::min<std::size_t>(
      static_cast<std::size_t>(std::llround(0.010 * clip.sample_rate)), mask_len / 2);

  AudioClip out = clip;
  for (std::size_t i = 0; i < mask_len; ++i) {
    const std::size_t from_end = mask_len - 1 - i;
    double gain = 0.0;
    if (i < fade_len) {
      gain = 1.0 - static_cast<double>(i + 1) / fade_len;
    } else if (from_end < fade_len) {
      gain = 1.0 - static_cast<double>(from_end + 1) / fade_len;
    }
    float& v = out.samples[start + i];
    v = gain == 0.0 ? 0.0f : static_cast<float>(v * gain);
  }
  return out;
}

AudioClip apply_impairment(const AudioClip& clip, const ImpairmentSpec& spec,
                           std::uint64_t rng_seed, const ImpairmentContext& ctx) {
  switch (spec.cls) {
    case ImpairmentClass::Identity:
      return clip;
    case ImpairmentClass::AddBackgroundNoise: {
      if (!spec.noise_source_id || ctx.noises == nullptr) {
        throw InvalidInputError("AddBackgroundNoise requires a noise source");
      }
      const auto it = ctx.noises->find(*spec.noise_source_id);
      if (it == ctx.noises->end()) {
        throw InvalidInputError("unknown noise source: " + *spec.noise_source_id);
      }
      Rng rng(derive_seed(rng_seed, "noise_offset"));
      const std::size_t offset = rng.below(it->second.size());
      return add_background_noise(clip, it->second, spec.param("snr_db"), offset);
    }
    case ImpairmentClass::ClippingImpairment:
      return clip_percentile(clip, spec.param("percentile"));
    case ImpairmentClass::GainTransition:
      return gain_transition(clip, spec.param("gain_db"),
                             spec.param("ramp_start_frac"), spec.param("ramp_len_frac"));
    case ImpairmentClass::LowPassFilter:
      return low_pass_filter(clip, spec.param("cutoff_hz"));
    case ImpairmentClass::CodecCompression: {
      const double bit_rate = spec.param("bit_rate");
      if (ctx.external_codec) {
        AudioClip coded = ctx.external_codec(clip, bit_rate);
        if (coded.sample_rate != clip.sample_rate) {
          coded = resample(coded, clip.sample_rate);
        }
        coded.samples = fix_length(coded.samples, clip.size());
        return coded;
      }
      return codec_compress(clip, bit_rate);
    }
    case ImpairmentClass::PitchShift:
      return pitch_shift(clip, spec.param("semitones"));
    case ImpairmentClass::RoomSimulator:
      return room_simulate(clip, spec.param("rt60_s"), derive_seed(rng_seed, "rir"));
    case ImpairmentClass::TimeMask:
      return time_mask(clip, spec.param("band_part"), spec.param("start_frac"));
    case ImpairmentClass::TimeStretch:
      return time_stretch(clip, spec.param("rate"));
  }
  throw InvalidInputError("unknown impairment class");
}

AudioClip apply_composite(const AudioClip& clip, const CompositeLabel& label,
                          std::uint64_t rng_seed, const ImpairmentContext& ctx) {
  label.validate();
  AudioClip out = clip;
  for (std::size_t i = 0; i < label.specs.size(); ++i) {
    const auto& spec = label.specs[i];
    const auto seed = derive_seed(
        rng_seed, "impairment/" + std::to_string(i) + "/" +
                      std::string(class_name(spec.cls)));
    out = apply_impairment(out, spec, seed, ctx);
  }
  if (out.size() != clip.size()) out.samples = fix_length(out.samples, clip.size());
  return out;
}

}  // namespace sqalab
