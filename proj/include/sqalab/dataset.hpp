#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sqalab/audio_io.hpp"
#include "sqalab/impairments.hpp"

namespace sqalab {

enum class Split { Train, Val, Test };
enum class Half { OneImpairment, TwoImpairment };

std::string_view to_string(Split split);
std::string_view to_string(Half half);
Split split_from_string(std::string_view name);
Half half_from_string(std::string_view name);

inline constexpr int kManifestSchemaVersion = 1;

struct ManifestEntry {
  std::string clip_id;
  std::string clean_id;
  /// Paths are relative to the manifest's directory.
  std::string degraded_path;
  std::string clean_path;
  CompositeLabel label;
  /// Quality scores keyed by metric name ("proxy", "pesq", ...).
  std::map<std::string, double> labels;
  Split split = Split::Train;
  Half half = Half::OneImpairment;
  /// Gain applied to the degraded clip before writing so its peak stays within
  /// [-1, 1]. 1.0 unless the impaired mix overshot full scale.
  double output_gain = 1.0;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  int schema_version = kManifestSchemaVersion;
  std::string config_hash;

  std::vector<const ManifestEntry*> select(Split split) const;
};

/// One JSON object per line; keys are emitted in sorted order so equal
/// manifests serialize to identical bytes.
std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(std::string_view text);
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  std::size_t total() const { return train + val + test; }
};

/// Roughly the 22539 / 3000 / 3000 proportions, at least one clip per split.
SplitCounts default_split_counts(std::size_t corpus_size);

struct SynthesisOptions {
  std::uint64_t seed = 0;
  SplitCounts counts;
  double clip_seconds = 10.0;
  std::filesystem::path out_dir;
  std::string config_hash;
  CodecHook external_codec;
};

/// Builds the two-half corpus: every selected clean clip is fixed to
/// clip_seconds, assigned to one split, and degraded once in each half.
/// Writes clean and degraded WAV files under out_dir and returns the manifest
/// (not yet written).
DatasetManifest synthesize_dataset(const std::vector<AudioClip>& clean_corpus,
                                   const std::vector<AudioClip>& noise_corpus,
                                   const SynthesisOptions& options);

/// Checks the corpus invariants; returns one message per violation.
std::vector<std::string> validate_manifest(const DatasetManifest& manifest);

/// Loads every *.wav under dir (sorted, recursive), resampled to 16 kHz.
/// source_id is the path relative to dir without extension, '/' -> '_'.
std::vector<AudioClip> load_corpus(const std::filesystem::path& dir);

}  // namespace sqalab
