#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sqalab/audio_io.hpp"
#include "sqalab/dataset.hpp"
#include "sqalab/features.hpp"

namespace sqalab {

/// N labeled vectors of one dimension.
struct EmbeddingSet {
  std::vector<std::vector<double>> vectors;
  std::vector<std::string> labels;
  std::vector<std::string> ids;
  std::string source;

  std::size_t size() const { return vectors.size(); }
  std::size_t dim() const { return vectors.empty() ? 0 : vectors[0].size(); }
  /// Throws InvalidInputError on ragged rows or mismatched field lengths.
  void validate() const;
  EmbeddingSet subset(const std::vector<std::size_t>& rows) const;
  /// Sorted distinct labels.
  std::vector<std::string> classes() const;
};

/// Per class, floor(count * train_frac) items go to train after a seeded
/// shuffle; the overall shortfall against floor(N * train_frac) is handed to
/// the classes with the largest fractional parts.
std::pair<EmbeddingSet, EmbeddingSet> stratified_split(const EmbeddingSet& set,
                                                       double train_frac, std::uint64_t seed);

/// Euclidean kNN over a fixed training set.
class KnnClassifier {
 public:
  KnnClassifier(const EmbeddingSet& train, std::size_t k);

  /// Every training class, best first: vote count, then smaller minimum
  /// neighbor distance, then name. Classes without votes follow in
  /// nearest-centroid order.
  std::vector<std::string> rank(std::span<const double> query) const;

 private:
  const EmbeddingSet& train_;
  std::size_t k_;
  std::vector<std::string> classes_;
  std::vector<std::size_t> class_of_;
  std::vector<std::vector<double>> centroids_;
};

std::vector<std::string> knn_rank(const EmbeddingSet& train, std::span<const double> query,
                                  std::size_t k = 15);

struct ProbeResult {
  double top1 = 0.0;
  double top3 = 0.0;
  std::vector<std::vector<std::string>> rankings;
};

ProbeResult knn_probe(const EmbeddingSet& train, const EmbeddingSet& test, std::size_t k = 15);

/// Labeled audio for probing.
struct LabeledClips {
  std::vector<AudioClip> clips;
  std::vector<std::string> labels;
  std::vector<std::string> ids;
};

/// Degraded clips of one split, labeled by composite class name.
LabeledClips load_manifest_clips(const DatasetManifest& manifest,
                                 const std::filesystem::path& root, Split split);
/// <dir>/<class>/<clip>.wav layout; labels are the directory names.
LabeledClips load_class_directory(const std::filesystem::path& dir);

/// out_dim inner products with N(0, 1/d) directions drawn once per seed.
EmbeddingSet random_projection_features(const LabeledClips& clips, std::size_t out_dim,
                                        std::uint64_t seed);

enum class MfccAggregation { Flatten, MeanOverTime };

EmbeddingSet mfcc_features(const LabeledClips& clips, const FramingConfig& cfg = {},
                           MfccAggregation aggregation = MfccAggregation::Flatten);

struct Pca2d {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> explained_ratio{};
  std::array<std::vector<double>, 2> components;
  std::vector<double> mean;
};

/// Top two principal axes by power iteration with deflation.
Pca2d pca_2d(const EmbeddingSet& set);

void write_pca_csv(const EmbeddingSet& set, const Pca2d& pca, const std::filesystem::path& path);
std::string pca_svg(const EmbeddingSet& set, const Pca2d& pca, const std::string& title);

}  // namespace sqalab
