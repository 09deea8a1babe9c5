#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sqalab/adam.hpp"
#include "sqalab/dataset.hpp"
#include "sqalab/model.hpp"

namespace sqalab {

/// Features and labels held in memory for one split.
struct LabeledFeatures {
  std::vector<std::string> ids;
  std::vector<std::string> classes;
  std::vector<SpectralFeature> features;
  std::vector<double> labels;

  std::size_t size() const { return features.size(); }
};

/// Computes features of every degraded clip of `split`. Entries lacking
/// `label_metric` raise InvalidInputError.
LabeledFeatures load_labeled_features(const DatasetManifest& manifest,
                                      const std::filesystem::path& root, Split split,
                                      const std::string& label_metric, FeatureKind kind);

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  /// Restore the parameters of the epoch with the lowest validation MSE.
  bool keep_best_val = false;
  /// Start the output bias at the mean training label.
  bool init_output_bias = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;  // NaN without a validation set
};

/// Called after every optimizer step with the batch predictions and labels.
using BatchObserver = std::function<void(std::size_t epoch, std::size_t batch,
                                         const std::vector<double>& predictions,
                                         const std::vector<double>& labels, double loss)>;
using EpochObserver = std::function<void(const EpochLog&)>;

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t selected_epoch = 0;
};

TrainResult train_model(Model<float>& model, const LabeledFeatures& train,
                        const LabeledFeatures* val, const TrainConfig& cfg,
                        const BatchObserver& on_batch = {}, const EpochObserver& on_epoch = {});

/// Inference-mode predictions in input order.
std::vector<double> predict(Model<float>& model, const LabeledFeatures& set,
                            std::size_t batch_size = 16);
std::vector<std::vector<float>> latents(Model<float>& model,
                                        const std::vector<SpectralFeature>& features,
                                        std::size_t batch_size = 16);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                        std::uint64_t seed, const std::string& config_hash);

}  // namespace sqalab
