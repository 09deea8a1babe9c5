#include "sqalab/synth_corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "sqalab/error.hpp"
#include "sqalab/rng.hpp"

namespace sqalab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFs = kSampleRate;

std::size_t samples_for(double seconds) {
  if (!(seconds > 0.0)) throw InvalidInputError("duration must be positive");
  return static_cast<std::size_t>(std::llround(seconds * kFs));
}

void normalize_peak(std::vector<float>& x, double peak) {
  float m = 0.0f;
  for (float v : x) m = std::max(m, std::abs(v));
  if (m <= 0.0f) return;
  const float g = static_cast<float>(peak / m);
  for (float& v : x) v *= g;
}

struct Vowel {
  double f1, f2, f3;
};

constexpr std::array<Vowel, 7> kVowels{{{730, 1090, 2440},
                                        {270, 2290, 3010},
                                        {530, 1840, 2480},
                                        {660, 1720, 2410},
                                        {570, 840, 2410},
                                        {300, 870, 2240},
                                        {490, 1350, 1690}}};

double resonance(double f, double center, double bandwidth) {
  const double r = (f - center) / bandwidth;
  return 1.0 / (1.0 + r * r);
}

// One-pole low-pass, coefficient from a cutoff in Hz.
struct OnePole {
  double a = 0.0, z = 0.0;
  explicit OnePole(double cutoff) : a(std::exp(-kTwoPi * cutoff / kFs)) {}
  double operator()(double x) { return z = (1.0 - a) * x + a * z; }
};

}  // namespace

AudioClip synth_speech(std::uint64_t seed, double seconds, std::string id) {
  const std::size_t n = samples_for(seconds);
  Rng rng(seed);
  std::vector<float> out(n, 0.0f);

  const double base_f0 = rng.uniform(90.0, 220.0);
  const double tilt = rng.uniform(0.8, 1.4);
  double phase = 0.0;
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.0, 0.15) * kFs);
  Vowel prev = kVowels[rng.below(kVowels.size())];
  OnePole fric_lp(rng.uniform(5000.0, 7000.0));
  double fric_prev = 0.0;

  while (pos < n) {
    const double kind = rng.uniform();
    const auto len = static_cast<std::size_t>(rng.uniform(0.12, 0.32) * kFs);
    const std::size_t end = std::min(n, pos + len);
    const std::size_t seg = end - pos;
    if (kind < 0.12) {
      pos = end;  // pause
      continue;
    }
    if (kind < 0.27) {
      const double amp = rng.uniform(0.05, 0.2);
      for (std::size_t i = 0; i < seg; ++i) {
        const double env = std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg));
        const double w = rng.normal();
        const double hp = w - fric_prev;
        fric_prev = w;
        out[pos + i] += static_cast<float>(amp * env * fric_lp(hp));
      }
      pos = end;
      continue;
    }
    const Vowel next = kVowels[rng.below(kVowels.size())];
    const double f0_start = base_f0 * rng.uniform(0.85, 1.2);
    const double f0_end = f0_start * rng.uniform(0.85, 1.1);
    const double amp = rng.uniform(0.4, 1.0);
    constexpr std::size_t kBlock = 80;
    for (std::size_t b = 0; b < seg; b += kBlock) {
      const double t = static_cast<double>(b) / static_cast<double>(seg);
      const double f0 = f0_start + (f0_end - f0_start) * t;
      const Vowel v{prev.f1 + (next.f1 - prev.f1) * std::min(1.0, 2 * t),
                    prev.f2 + (next.f2 - prev.f2) * std::min(1.0, 2 * t),
                    prev.f3 + (next.f3 - prev.f3) * std::min(1.0, 2 * t)};
      const auto harmonics = static_cast<int>(std::min(60.0, 7000.0 / f0));
      std::array<double, 64> gains{};
      for (int h = 1; h <= harmonics; ++h) {
        const double f = h * f0;
        gains[h] = (resonance(f, v.f1, 90) + 0.7 * resonance(f, v.f2, 120) +
                    0.4 * resonance(f, v.f3, 170) + 0.02) /
                   std::pow(h, tilt * 0.5);
      }
      const std::size_t bend = std::min(seg, b + kBlock);
      for (std::size_t i = b; i < bend; ++i) {
        const double ti = static_cast<double>(i) / static_cast<double>(seg);
        const double env = std::pow(std::sin(std::numbers::pi * ti), 0.6);
        double s = 0.0;
        for (int h = 1; h <= harmonics; ++h) s += gains[h] * std::sin(h * phase);
        out[pos + i] += static_cast<float>(amp * env * s);
        phase += kTwoPi * f0 / kFs;
        if (phase > kTwoPi) phase -= kTwoPi;
      }
    }
    prev = next;
    pos = end;
  }
  for (auto& v : out) v += static_cast<float>(1e-4 * rng.normal());
  normalize_peak(out, rng.uniform(0.4, 0.8));
  return AudioClip{std::move(out), kSampleRate, std::move(id)};
}

std::vector<AudioClip> synth_speech_corpus(std::size_t count, double min_seconds,
                                           double max_seconds, std::uint64_t seed) {
  if (min_seconds > max_seconds) throw InvalidInputError("min duration exceeds max duration");
  std::vector<AudioClip> out(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "spk%05td", i);
    const std::uint64_t s = derive_seed(seed, std::string("speech/") + id);
    Rng dur(derive_seed(s, "duration"));
    out[i] = synth_speech(s, dur.uniform(min_seconds, max_seconds), id);
  }
  return out;
}

std::vector<AudioClip> synth_noise_corpus(std::size_t count, double seconds, std::uint64_t seed) {
  static const char* kKinds[] = {"white", "pink", "brown", "babble", "hum", "bandmod"};
  const std::size_t n = samples_for(seconds);
  std::vector<AudioClip> out;
  for (std::size_t c = 0; c < count; ++c) {
    const std::string kind = kKinds[c % 6];
    const std::string id = "noise" + std::to_string(c) + "_" + kind;
    Rng rng(derive_seed(seed, "noise/" + id));
    std::vector<float> x(n, 0.0f);
    if (kind == "white") {
      for (auto& v : x) v = static_cast<float>(rng.normal());
    } else if (kind == "pink") {
      // Paul Kellet's filter.
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (auto& v : x) {
        const double w = rng.normal();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        v = static_cast<float>(b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362);
        b6 = w * 0.115926;
      }
    } else if (kind == "brown") {
      double acc = 0.0;
      for (auto& v : x) {
        acc = 0.998 * acc + 0.05 * rng.normal();
        v = static_cast<float>(acc);
      }
    } else if (kind == "babble") {
      for (int talker = 0; talker < 5; ++talker) {
        const auto s = synth_speech(rng.next_u64(), seconds, "");
        for (std::size_t i = 0; i < n; ++i) x[i] += s.samples[i];
      }
    } else if (kind == "hum") {
      const double f = rng.uniform() < 0.5 ? 50.0 : 60.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kFs;
        double s = 0.0;
        for (int h = 1; h <= 8; ++h) s += std::sin(kTwoPi * f * h * t) / h;
        x[i] = static_cast<float>(s + 0.05 * rng.normal());
      }
    } else {
      OnePole lp(rng.uniform(800.0, 3000.0));
      const double rate = rng.uniform(0.5, 4.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kFs;
        x[i] = static_cast<float>(lp(rng.normal()) * (1.2 + std::sin(kTwoPi * rate * t)));
      }
    }
    normalize_peak(x, 0.7);
    out.push_back(AudioClip{std::move(x), kSampleRate, id});
  }
  return out;
}

const std::vector<std::string>& environment_classes() {
  static const std::vector<std::string> kClasses{
      "chirping_birds", "clock_tick", "crackling_fire", "crickets", "dog",
      "engine",         "rain",       "siren",          "water_drops", "wind"};
  return kClasses;
}

AudioClip synth_environment(const std::string& cls, std::uint64_t seed, double seconds) {
  const std::size_t n = samples_for(seconds);
  Rng rng(seed);
  std::vector<float> x(n, 0.0f);
  auto t_of = [](std::size_t i) { return static_cast<double>(i) / kFs; };

  if (cls == "chirping_birds") {
    const int chirps = static_cast<int>(rng.uniform(6, 20));
    for (int c = 0; c < chirps; ++c) {
      const auto start = static_cast<std::size_t>(rng.uniform(0.0, seconds - 0.2) * kFs);
      const auto len = static_cast<std::size_t>(rng.uniform(0.04, 0.15) * kFs);
      const double f0 = rng.uniform(2500, 5000), sweep = rng.uniform(-2000, 2500);
      double ph = 0.0;
      for (std::size_t i = 0; i < len && start + i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(len);
        ph += kTwoPi * (f0 + sweep * u) / kFs;
        x[start + i] += static_cast<float>(std::sin(std::numbers::pi * u) * std::sin(ph));
      }
    }
  } else if (cls == "clock_tick") {
    const double period = rng.uniform(0.4, 1.1);
    const double f = rng.uniform(1500, 4000);
    for (double t0 = rng.uniform(0.0, period); t0 < seconds; t0 += period) {
      const auto start = static_cast<std::size_t>(t0 * kFs);
      for (std::size_t i = 0; i < 400 && start + i < n; ++i) {
        const double t = t_of(i);
        x[start + i] += static_cast<float>(std::exp(-t * 250.0) * std::sin(kTwoPi * f * t));
      }
    }
  } else if (cls == "crackling_fire") {
    OnePole lp(rng.uniform(300, 900));
    const double density = rng.uniform(15, 60);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<float>(0.3 * lp(rng.normal()));
      if (rng.uniform() < density / kFs) {
        const double a = rng.uniform(0.3, 1.0);
        for (std::size_t k = 0; k < 60 && i + k < n; ++k) {
          x[i + k] += static_cast<float>(a * rng.normal() * std::exp(-static_cast<double>(k) / 12.0));
        }
      }
    }
  } else if (cls == "crickets") {
    const double f = rng.uniform(4000, 6500), pulse = rng.uniform(20, 60);
    const double chirp_rate = rng.uniform(1.0, 3.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t_of(i);
      const double gate = std::sin(kTwoPi * chirp_rate * t) > 0.2 ? 1.0 : 0.0;
      const double am = 0.5 + 0.5 * std::sin(kTwoPi * pulse * t);
      x[i] = static_cast<float>(gate * am * std::sin(kTwoPi * f * t) + 0.02 * rng.normal());
    }
  } else if (cls == "dog") {
    const int barks = static_cast<int>(rng.uniform(2, 6));
    for (int b = 0; b < barks; ++b) {
      const auto start = static_cast<std::size_t>(rng.uniform(0.0, seconds - 0.3) * kFs);
      const auto len = static_cast<std::size_t>(rng.uniform(0.12, 0.25) * kFs);
      const double f0 = rng.uniform(350, 700);
      double ph = 0.0;
      for (std::size_t i = 0; i < len && start + i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(len);
        ph += kTwoPi * f0 * (1.0 - 0.3 * u) / kFs;
        double s = 0.0;
        for (int h = 1; h <= 8; ++h) s += std::sin(h * ph) / h;
        x[start + i] += static_cast<float>(std::exp(-4 * u) * (s + 0.3 * rng.normal()));
      }
    }
  } else if (cls == "engine") {
    const double f = rng.uniform(25, 70);
    OnePole lp(rng.uniform(200, 600));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t_of(i);
      double s = 0.0;
      for (int h = 1; h <= 12; ++h) s += std::sin(kTwoPi * f * h * t + h) / std::sqrt(h);
      x[i] = static_cast<float>(s * (1.0 + 0.2 * std::sin(kTwoPi * 0.5 * t)) + 2.0 * lp(rng.normal()));
    }
  } else if (cls == "rain") {
    OnePole lp(rng.uniform(2500, 6000));
    const double density = rng.uniform(200, 800);
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.5 * lp(rng.normal());
      if (rng.uniform() < density / kFs) v += rng.uniform(-1.0, 1.0);
      x[i] = static_cast<float>(v);
    }
  } else if (cls == "siren") {
    const double lo = rng.uniform(500, 800), hi = lo + rng.uniform(300, 800);
    const double rate = rng.uniform(0.2, 1.5);
    double ph = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t_of(i);
      const double f = lo + (hi - lo) * (0.5 + 0.5 * std::sin(kTwoPi * rate * t));
      ph += kTwoPi * f / kFs;
      x[i] = static_cast<float>(std::sin(ph) + 0.3 * std::sin(2 * ph) + 0.02 * rng.normal());
    }
  } else if (cls == "water_drops") {
    const int drops = static_cast<int>(rng.uniform(5, 25));
    for (int d = 0; d < drops; ++d) {
      const auto start = static_cast<std::size_t>(rng.uniform(0.0, seconds - 0.1) * kFs);
      const double f0 = rng.uniform(600, 1800);
      double ph = 0.0;
      for (std::size_t i = 0; i < 1600 && start + i < n; ++i) {
        const double t = t_of(i);
        ph += kTwoPi * f0 * (1.0 + 8.0 * t) / kFs;
        x[start + i] += static_cast<float>(std::exp(-t * 40.0) * std::sin(ph));
      }
    }
    for (auto& v : x) v += static_cast<float>(0.01 * rng.normal());
  } else if (cls == "wind") {
    OnePole lp(rng.uniform(150, 500));
    const double rate = rng.uniform(0.1, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t_of(i);
      x[i] = static_cast<float>(lp(rng.normal()) * (1.0 + 0.8 * std::sin(kTwoPi * rate * t + 1.0)));
    }
  } else {
    throw InvalidInputError("unknown environment class '" + cls + "'");
  }
  // A faint shared background keeps classes from being separable by silence alone.
  for (auto& v : x) v += static_cast<float>(0.002 * rng.normal());
  normalize_peak(x, rng.uniform(0.3, 0.9));
  return AudioClip{std::move(x), kSampleRate, cls};
}

void write_environment_corpus(const std::filesystem::path& dir, std::size_t per_class,
                              double seconds, std::uint64_t seed) {
  for (const auto& cls : environment_classes()) {
    const auto cdir = dir / cls;
    std::filesystem::create_directories(cdir);
    const auto n = static_cast<std::ptrdiff_t>(per_class);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const std::string id = cls + "-" + std::to_string(i);
      const auto clip = synth_environment(cls, derive_seed(seed, "environment/" + id), seconds);
      write_wav(clip, cdir / (id + ".wav"));
    }
  }
}

void write_corpus(const std::vector<AudioClip>& clips, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto n = static_cast<std::ptrdiff_t>(clips.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    write_wav(clips[i], dir / (clips[i].source_id + ".wav"));
  }
}

}  // namespace sqalab
