#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sqalab/audio_io.hpp"

namespace sqalab {

/// Speech-like test signal: formant-filtered harmonic syllables with a
/// drifting pitch contour, fricative bursts and pauses.
AudioClip synth_speech(std::uint64_t seed, double seconds, std::string id);

/// `count` utterances with durations drawn from [min_seconds, max_seconds].
std::vector<AudioClip> synth_speech_corpus(std::size_t count, double min_seconds,
                                           double max_seconds, std::uint64_t seed);

/// Background noises (white, pink, brown, babble, hum, modulated band noise).
std::vector<AudioClip> synth_noise_corpus(std::size_t count, double seconds, std::uint64_t seed);

/// Class names of the synthetic environmental-sound corpus.
const std::vector<std::string>& environment_classes();
AudioClip synth_environment(const std::string& cls, std::uint64_t seed, double seconds);

/// Writes <dir>/<class>/<class>-<n>.wav for every class.
void write_environment_corpus(const std::filesystem::path& dir, std::size_t per_class,
                              double seconds, std::uint64_t seed);

/// Writes each clip to <dir>/<source_id>.wav.
void write_corpus(const std::vector<AudioClip>& clips, const std::filesystem::path& dir);

}  // namespace sqalab
