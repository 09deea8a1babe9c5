#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "checks.hpp"
#include "check_util.hpp"
#include "sqalab/audio_io.hpp"
#include "sqalab/dataset.hpp"
#include "sqalab/impairments.hpp"
#include "sqalab/labeling.hpp"
#include "sqalab/synth_corpus.hpp"
#include "test_util.hpp"

namespace sqalab::checks {
namespace {

using testutil::clip_of;
using testutil::sine;

constexpr int kRate = 16000;

void noise_checks(CheckList& out) {
  add(out, "noise_gain at equal rms and 0 dB is 1",
      std::abs(noise_gain(0.1, 0.1, 0.0) - 1.0) < 1e-12, "");
  add(out, "noise_gain at 20 dB is 0.1",
      std::abs(noise_gain(0.1, 0.1, 20.0) - 0.1) < 1e-12, "");

  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto clean = clip_of(testutil::noise(48000, 100 + seed, 0.05 + 0.02 * seed));
    const auto noise = clip_of(testutil::noise(20000, 200 + seed, 0.3));
    const std::size_t offset = 1234 * seed;
    const auto mixed = add_background_noise(clean, noise, -10.0, offset);
    std::vector<float> residual(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) residual[i] = mixed.samples[i] - clean.samples[i];
    const double snr = 20.0 * std::log10(testutil::rms(clean.samples) / testutil::rms(residual));
    worst = std::max(worst, std::abs(snr + 10.0));
  }
  add(out, "measured SNR after mixing at -10 dB", worst <= 0.01, "max |err| = " + fmt(worst) + " dB");

  bool threw = false;
  try {
    add_background_noise(clip_of(sine(440, 0.1)), clip_of(std::vector<float>(100, 0.0f)), 0.0);
  } catch (const InvalidInputError&) {
    threw = true;
  }
  add(out, "silent noise is rejected", threw, "");
}

void clipping_checks(CheckList& out) {
  std::vector<float> ramp(100);
  for (std::size_t i = 0; i < 100; ++i) ramp[i] = static_cast<float>((i + 1) * 0.01);
  std::vector<double> mags(ramp.begin(), ramp.end());
  const double t = percentile(mags, 60.0);
  const auto clipped = clip_percentile(clip_of(ramp), 40.0);
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    if (clipped.samples[i] != ramp[i]) ++saturated;
  }
  add(out, "ramp percentile 40 threshold", std::abs(t - 0.604) < 1e-6, "t = " + fmt(t));
  add(out, "ramp percentile 40 saturates exactly 40 samples", saturated == 40,
      std::to_string(saturated) + " saturated");

  const auto x = clip_of(testutil::noise(4000, 7, 0.2));
  add(out, "percentile 0 is the identity", clip_percentile(x, 0.0).samples == x.samples, "");
  const auto flat = clip_of(std::vector<float>(500, 0.5f));
  add(out, "constant clip is unchanged by clipping",
      clip_percentile(flat, 33.0).samples == flat.samples, "");
}

void gain_checks(CheckList& out) {
  const auto x = clip_of(testutil::noise(16000, 8, 0.1));
  add(out, "0 dB gain transition is the identity",
      gain_transition(x, 0.0, 0.2, 0.3).samples == x.samples, "");

  const auto y = gain_transition(x, -60.0, 0.2, 0.3);
  double worst = 0.0;
  for (std::size_t i = 8000; i < x.size(); ++i) {
    const double want = x.samples[i] * 1e-3;
    worst = std::max(worst, std::abs(y.samples[i] - want) / std::abs(want));
  }
  add(out, "-60 dB scales samples after the ramp by 1e-3", worst < 1e-6, "max rel diff " + fmt(worst));

  // A ramp from sample 0 to 1000 reaches 10 dB at its midpoint.
  const double db = gain_transition_db(500, 10000, 20.0, 0.0, 0.1);
  const double g = std::pow(10.0, db / 20.0);
  add(out, "ramp midpoint gain is 10^0.5", std::abs(g - std::sqrt(10.0)) < 1e-9, "gain " + fmt(g));
}

void lowpass_checks(CheckList& out) {
  const double cutoff = 800.0;
  const auto dc = low_pass_filter(clip_of(std::vector<float>(16000, 0.3f)), cutoff);
  add(out, "low-pass DC gain", std::abs(dc.samples.back() - 0.3) < 1e-3,
      "tail " + fmt(dc.samples.back()));

  const auto at_cut = sine(cutoff, 1.0);
  const auto y1 = low_pass_filter(clip_of(at_cut), cutoff);
  const double ratio = testutil::rms(y1.samples, 8000) / testutil::rms(at_cut, 8000);
  add(out, "low-pass gain at cutoff is 1/sqrt(2)", std::abs(ratio - 1.0 / std::sqrt(2.0)) <= 0.02,
      "ratio " + fmt(ratio));

  const auto high = sine(8.0 * cutoff, 1.0);
  const auto y2 = low_pass_filter(clip_of(high), cutoff);
  const double att = 20.0 * std::log10(testutil::rms(high, 8000) / testutil::rms(y2.samples, 8000));
  add(out, "low-pass attenuation three octaves up", att >= 30.0, fmt(att) + " dB");
}

void codec_checks(CheckList& out) {
  add(out, "codec step at 14 kbps", std::abs(codec_quant_step(14.0) - 0.5 / 7.0) < 1e-12,
      fmt(codec_quant_step(14.0)));
  add(out, "codec step at 8 kbps", std::abs(codec_quant_step(8.0) - 0.5) < 1e-12,
      fmt(codec_quant_step(8.0)));
  bool ordered = true;
  bool lengths = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto x = synth_speech(seed, 2.0, "codec");
    const auto lo = codec_compress(x, 8.0);
    const auto hi = codec_compress(x, 14.0);
    lengths = lengths && lo.size() == x.size() && hi.size() == x.size();
    const double d_lo = proxy_distance(x, lo);
    const double d_hi = proxy_distance(x, hi);
    ordered = ordered && d_lo >= d_hi;
    detail += fmt(d_lo) + ">=" + fmt(d_hi) + " ";
  }
  add(out, "codec distortion grows as bit rate drops", ordered, detail);
  add(out, "codec preserves duration", lengths, "");
}

void pitch_checks(CheckList& out) {
  const auto x = synth_speech(11, 2.0, "pitch");
  const auto same = pitch_shift(x, 0.0);
  const double snr = testutil::snr_db(x.samples, same.samples);
  add(out, "pitch shift by 0 reconstructs the input", snr >= 30.0, fmt(snr) + " dB");

  const auto tone = clip_of(sine(440.0, 2.0, kRate, 0.5));
  for (double st : {12.0, -12.0}) {
    const auto y = pitch_shift(tone, st);
    const auto [f, bin] = testutil::dominant_frequency(y.samples, kRate, 4000, 4096);
    const double want = 440.0 * std::pow(2.0, st / 12.0);
    add(out, "pitch shift " + fmt(st) + " semitones moves the peak",
        std::abs(f - want) <= bin + 1e-9, "peak " + fmt(f) + " Hz, bin " + fmt(bin));
  }
}

void room_checks(CheckList& out) {
  bool decay_ok = true;
  std::string detail;
  for (double rt60 : {0.8, 1.1, 1.5}) {
    const auto h = synthesize_rir(rt60, kRate, 99);
    std::vector<double> edc(h.size() + 1, 0.0);
    for (std::size_t i = h.size(); i-- > 0;) edc[i] = edc[i + 1] + h[i] * h[i];
    std::size_t n60 = h.size();
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (10.0 * std::log10(edc[i] / edc[0]) <= -60.0) {
        n60 = i;
        break;
      }
    }
    const double t60 = static_cast<double>(n60) / kRate;
    decay_ok = decay_ok && std::abs(t60 - rt60) <= 0.1 * rt60;
    detail += fmt(rt60) + "->" + fmt(t60) + " ";
  }
  add(out, "Schroeder decay reaches -60 dB at rt60", decay_ok, detail);

  std::vector<float> impulse(40000, 0.0f);
  impulse[0] = 1.0f;
  const auto y = room_simulate(clip_of(impulse), 1.0, 5);
  const auto h = synthesize_rir(1.0, kRate, 5);
  const double scale = y.samples[0] / h[0];
  double worst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double want = i < h.size() ? scale * h[i] : 0.0;
    worst = std::max(worst, std::abs(y.samples[i] - want));
  }
  add(out, "room impulse response equals the RIR", worst < 1e-6, "max diff " + fmt(worst));

  const auto x = synth_speech(12, 1.0, "room");
  add(out, "room simulation preserves length", room_simulate(x, 1.2, 3).size() == x.size(), "");
}

void mask_checks(CheckList& out) {
  const auto x = clip_of(testutil::noise(160000, 13, 0.2));
  const auto y = time_mask(x, 0.5, 0.25);
  const auto zeros = static_cast<std::size_t>(std::count(y.samples.begin(), y.samples.end(), 0.0f));
  add(out, "half-clip time mask zeroes the region", zeros >= 80000 - 320, std::to_string(zeros) + " zeros");
  double ex = 0.0, ey = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ex += static_cast<double>(x.samples[i]) * x.samples[i];
    ey += static_cast<double>(y.samples[i]) * y.samples[i];
  }
  add(out, "time mask never adds energy", ey <= ex, "");
  const bool outside = std::equal(x.samples.begin(), x.samples.begin() + 40000, y.samples.begin()) &&
                       std::equal(x.samples.begin() + 120000, x.samples.end(), y.samples.begin() + 120000);
  add(out, "time mask leaves the rest untouched", outside, "");
}

void stretch_checks(CheckList& out) {
  const auto x = synth_speech(14, 2.0, "stretch");
  const double snr = testutil::snr_db(x.samples, time_stretch(x, 1.0).samples);
  add(out, "stretch at rate 1 reconstructs the input", snr >= 30.0, fmt(snr) + " dB");

  const auto long_clip = synth_speech(15, 10.0, "stretch");
  const auto fast = phase_vocoder_stretch(long_clip.samples, 2.0);
  const auto diff = static_cast<long long>(fast.size()) - 80000;
  add(out, "stretch at rate 2 halves the length", std::llabs(diff) <= 512,
      std::to_string(fast.size()) + " samples");
  const auto padded = time_stretch(long_clip, 2.0);
  bool repeats = padded.size() == 160000;
  for (std::size_t i = 0; repeats && i < padded.size(); ++i) {
    repeats = padded.samples[i] == fast[i % fast.size()];
  }
  add(out, "stretched clip is padded by repetition", repeats, "");

  const auto tone = clip_of(sine(440.0, 2.0, kRate, 0.5));
  const auto y = time_stretch(tone, 2.0);
  const auto [f, bin] = testutil::dominant_frequency(y.samples, kRate, 2000, 4096);
  add(out, "stretch keeps the pitch", std::abs(f - 440.0) <= bin + 1e-9, "peak " + fmt(f) + " Hz");
}

void composite_checks(CheckList& out) {
  const auto x = synth_speech(16, 1.0, "composite");
  CompositeLabel identity{{ImpairmentSpec{ImpairmentClass::Identity, {}, {}}}};
  add(out, "identity composite", apply_composite(x, identity, 1).samples == x.samples, "");

  CompositeLabel pair{{
      ImpairmentSpec{ImpairmentClass::PitchShift, {{"semitones", 2.5}}, {}},
      ImpairmentSpec{ImpairmentClass::LowPassFilter, {{"cutoff_hz", 700.0}}, {}},
  }};
  const auto a = apply_composite(x, pair, 42);
  const auto b = apply_composite(x, pair, 42);
  add(out, "composite is deterministic", a.samples == b.samples, "");

  const ImpairmentSpec mask{ImpairmentClass::TimeMask, {{"band_part", 0.3}, {"start_frac", 0.4}}, {}};
  CompositeLabel degenerate{{
      ImpairmentSpec{ImpairmentClass::GainTransition,
                     {{"gain_db", 0.0}, {"ramp_start_frac", 0.1}, {"ramp_len_frac", 0.2}}, {}},
      mask,
  }};
  const auto composed = apply_composite(x, degenerate, 3);
  const auto alone = apply_impairment(x, mask, 3);
  add(out, "0 dB gain transition then mask equals the mask alone",
      composed.samples == alone.samples, "");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), a));
  }
  std::size_t count_b = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) ++count_b;
  }
  if (files.size() != count_b) return false;
  for (const auto& f : files) {
    if (slurp(a / f) != slurp(b / f)) return false;
  }
  return true;
}

void dataset_checks(CheckList& out) {
  testutil::TempDir tmp("checks-dataset");
  const auto clean = synth_speech_corpus(160, 1.5, 3.0, 5);
  const auto noises = synth_noise_corpus(6, 3.0, 6);
  SynthesisOptions opt;
  opt.seed = 77;
  opt.counts = default_split_counts(clean.size());
  opt.clip_seconds = 2.0;

  opt.out_dir = tmp.path() / "a";
  auto manifest = synthesize_dataset(clean, noises, opt);
  write_manifest(manifest, opt.out_dir / "manifest.jsonl");
  opt.out_dir = tmp.path() / "b";
  auto again = synthesize_dataset(clean, noises, opt);
  write_manifest(again, opt.out_dir / "manifest.jsonl");

  const auto problems = validate_manifest(manifest);
  add(out, "synthesized manifest passes validation", problems.empty(),
      problems.empty() ? "" : problems.front());

  std::map<std::string, int> singles;
  std::set<std::string> classes;
  std::map<std::string, std::set<Split>> splits;
  for (const auto& e : manifest.entries) {
    classes.insert(e.label.class_name());
    splits[e.clean_id].insert(e.split);
    if (e.half == Half::OneImpairment) singles[e.label.class_name()] += 1;
  }
  bool ratio_ok = singles.size() == kSingleClasses.size();
  std::string detail;
  for (const auto& [name, n] : singles) {
    ratio_ok = ratio_ok && std::abs(n - 16) <= 1;
    detail += name + "=" + std::to_string(n) + " ";
  }
  add(out, "160 clips give 16 per single class", ratio_ok, detail);
  add(out, "clean utterances stay in one split",
      std::all_of(splits.begin(), splits.end(), [](const auto& kv) { return kv.second.size() == 1; }), "");
  add(out, "all 16 classes appear", classes.size() == 16, std::to_string(classes.size()) + " classes");

  bool lengths = true;
  bool bounded = true;
  double snr_err = 0.0;
  std::size_t snr_entries = 0;
  const auto root = tmp.path() / "a";
  for (const auto& e : manifest.entries) {
    const auto degraded = read_wav(root / e.degraded_path);
    lengths = lengths && degraded.size() == 32000;
    for (float v : degraded.samples) bounded = bounded && std::abs(v) <= 1.0f + 1e-6f;
    if (e.half == Half::OneImpairment && e.label.specs[0].cls == ImpairmentClass::AddBackgroundNoise) {
      const auto ref = read_wav(root / e.clean_path);
      std::vector<float> noise(ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) {
        noise[i] = static_cast<float>(degraded.samples[i] / e.output_gain - ref.samples[i]);
      }
      const double snr = 20.0 * std::log10(testutil::rms(ref.samples) / testutil::rms(noise));
      snr_err = std::max(snr_err, std::abs(snr - e.label.specs[0].param("snr_db")));
      ++snr_entries;
    }
  }
  add(out, "every degraded clip keeps the fixed length", lengths, "");
  add(out, "every written sample lies in [-1, 1]", bounded, "");
  add(out, "stored components reproduce the recorded SNR", snr_entries > 0 && snr_err <= 0.01,
      std::to_string(snr_entries) + " clips, max |err| " + fmt(snr_err) + " dB");
  add(out, "equal seeds give identical manifests and audio",
      manifest_to_jsonl(manifest) == manifest_to_jsonl(again) &&
          same_tree(tmp.path() / "a", tmp.path() / "b"),
      "");
}

}  // namespace

CheckList impairment_checks() {
  CheckList out;
  noise_checks(out);
  clipping_checks(out);
  gain_checks(out);
  lowpass_checks(out);
  codec_checks(out);
  pitch_checks(out);
  room_checks(out);
  mask_checks(out);
  stretch_checks(out);
  composite_checks(out);
  dataset_checks(out);
  return out;
}

}  // namespace sqalab::checks
