#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sqalab/audio_io.hpp"
#include "sqalab/rng.hpp"

namespace sqalab {

enum class ImpairmentClass {
  Identity,
  AddBackgroundNoise,
  ClippingImpairment,
  GainTransition,
  LowPassFilter,
  CodecCompression,
  PitchShift,
  RoomSimulator,
  TimeMask,
  TimeStretch,
};

inline constexpr std::array<ImpairmentClass, 10> kSingleClasses = {
    ImpairmentClass::Identity,        ImpairmentClass::AddBackgroundNoise,
    ImpairmentClass::ClippingImpairment, ImpairmentClass::GainTransition,
    ImpairmentClass::LowPassFilter,   ImpairmentClass::CodecCompression,
    ImpairmentClass::PitchShift,      ImpairmentClass::RoomSimulator,
    ImpairmentClass::TimeMask,        ImpairmentClass::TimeStretch,
};

/// Double-impairment composites, each applied in the listed order.
inline constexpr std::array<std::array<ImpairmentClass, 2>, 6> kPairClasses = {{
    {ImpairmentClass::AddBackgroundNoise, ImpairmentClass::RoomSimulator},
    {ImpairmentClass::AddBackgroundNoise, ImpairmentClass::LowPassFilter},
    {ImpairmentClass::AddBackgroundNoise, ImpairmentClass::TimeStretch},
    {ImpairmentClass::RoomSimulator, ImpairmentClass::CodecCompression},
    {ImpairmentClass::PitchShift, ImpairmentClass::LowPassFilter},
    {ImpairmentClass::GainTransition, ImpairmentClass::TimeMask},
}};

std::string_view class_name(ImpairmentClass cls);
ImpairmentClass impairment_class_from_name(std::string_view name);

struct ParamRange {
  std::string_view name;
  double lo;
  double hi;
};

/// Sampling ranges for the parameters of one class (empty for Identity).
std::span<const ParamRange> param_ranges(ImpairmentClass cls);

struct ImpairmentSpec {
  ImpairmentClass cls = ImpairmentClass::Identity;
  std::map<std::string, double> params;
  std::optional<std::string> noise_source_id;

  double param(const std::string& name) const;
  bool operator==(const ImpairmentSpec&) const = default;
};

/// One or two impairments forming one of the 16 classification classes.
struct CompositeLabel {
  std::vector<ImpairmentSpec> specs;

  std::string class_name() const;
  /// Throws InvalidInputError unless this is one of the 16 allowed classes.
  void validate() const;
  bool operator==(const CompositeLabel&) const = default;
};

/// Canonical names of all 16 classes: 10 singles then 6 pairs.
std::vector<std::string> class_universe();

/// Draws the parameters of `cls` from its range. `noise_ids` must be sorted;
/// one is chosen for AddBackgroundNoise.
ImpairmentSpec sample_impairment(ImpairmentClass cls, Rng& rng,
                                 std::span<const std::string> noise_ids);

// Individual impairments. All preserve the input length.

AudioClip add_background_noise(const AudioClip& clip, const AudioClip& noise,
                               double snr_db, std::size_t noise_offset = 0);
/// Linear gain applied to the noise so that the mix has the requested SNR.
double noise_gain(double clip_rms, double noise_rms, double snr_db);
double rms(std::span<const float> x);

/// Linearly interpolated p-th percentile (numpy "linear" convention).
double percentile(std::vector<double> values, double p);
AudioClip clip_percentile(const AudioClip& clip, double percentile_value);

AudioClip gain_transition(const AudioClip& clip, double gain_db,
                          double ramp_start_frac, double ramp_len_frac);
/// Gain in dB applied at sample i.
double gain_transition_db(std::size_t i, std::size_t length, double gain_db,
                          double ramp_start_frac, double ramp_len_frac);

/// Biquad coefficients (b0, b1, b2, a1, a2) with a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};
Biquad butterworth_lowpass(double cutoff_hz, int sample_rate);
AudioClip low_pass_filter(const AudioClip& clip, double cutoff_hz);

double codec_bandwidth_hz(double bit_rate);
double codec_quant_step(double bit_rate);
AudioClip codec_compress(const AudioClip& clip, double bit_rate);

/// Phase-vocoder time stretch; output length is round(len / rate).
std::vector<float> phase_vocoder_stretch(std::span<const float> x, double rate,
                                         std::size_t n_fft = 1024,
                                         std::size_t hop = 256);
AudioClip pitch_shift(const AudioClip& clip, double semitones);
/// Stretch by `rate`, then restore the input length with fix_duration.
AudioClip time_stretch(const AudioClip& clip, double rate);

/// Exponentially decaying noise RIR of length 1.5 * rt60 * fs, unit peak.
std::vector<double> synthesize_rir(double rt60_s, int sample_rate,
                                   std::uint64_t seed);
AudioClip room_simulate(const AudioClip& clip, double rt60_s,
                        std::uint64_t rng_seed);

AudioClip time_mask(const AudioClip& clip, double band_part, double start_frac);

/// Replacement codec, e.g. a real MP3 encoder driven from the command line.
using CodecHook = std::function<AudioClip(const AudioClip&, double bit_rate)>;

struct ImpairmentContext {
  /// Noise clips keyed by source id.
  const std::map<std::string, AudioClip>* noises = nullptr;
  CodecHook external_codec;
};

AudioClip apply_impairment(const AudioClip& clip, const ImpairmentSpec& spec,
                           std::uint64_t rng_seed,
                           const ImpairmentContext& ctx = {});

/// Applies the label's impairments in order; deterministic in
/// (clip, label, rng_seed).
AudioClip apply_composite(const AudioClip& clip, const CompositeLabel& label,
                          std::uint64_t rng_seed,
                          const ImpairmentContext& ctx = {});

}  // namespace sqalab
