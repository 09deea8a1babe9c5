#include "sqalab/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "sqalab/audio_io.hpp"

namespace sqalab {

LabeledFeatures load_labeled_features(const DatasetManifest& manifest,
                                      const std::filesystem::path& root, Split split,
                                      const std::string& label_metric, FeatureKind kind) {
  const auto entries = manifest.select(split);
  LabeledFeatures out;
  out.ids.resize(entries.size());
  out.classes.resize(entries.size());
  out.features.resize(entries.size());
  out.labels.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto* e = entries[i];
    auto it = e->labels.find(label_metric);
    if (it == e->labels.end()) {
      throw InvalidInputError("clip '" + e->clip_id + "' has no '" + label_metric + "' label");
    }
    out.ids[i] = e->clip_id;
    out.classes[i] = e->label.class_name();
    out.labels[i] = it->second;
  }
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
  std::vector<std::string> errors(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto clip = load_clip(root / entries[i]->degraded_path);
      out.features[i] = compute_feature(clip, kind);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }
  return out;
}

namespace {

Tensor gather(const LabeledFeatures& set, const std::vector<std::size_t>& order,
              std::size_t begin, std::size_t end) {
  std::vector<const SpectralFeature*> batch;
  for (std::size_t i = begin; i < end; ++i) batch.push_back(&set.features[order[i]]);
  return feature_batch(batch);
}

double mean_squared(const std::vector<double>& p, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - y[i]) * (p[i] - y[i]);
  return acc / static_cast<double>(p.size());
}

}  // namespace

TrainResult train_model(Model<float>& model, const LabeledFeatures& train,
                        const LabeledFeatures* val, const TrainConfig& cfg,
                        const BatchObserver& on_batch, const EpochObserver& on_epoch) {
  if (train.size() == 0) throw InvalidInputError("training split is empty");
  if (cfg.batch_size == 0) throw InvalidInputError("batch size must be positive");
  for (double y : train.labels) {
    if (!std::isfinite(y)) throw InvalidInputError("non-finite training label");
  }

  if (cfg.init_output_bias) {
    const double mean = std::accumulate(train.labels.begin(), train.labels.end(), 0.0) /
                        static_cast<double>(train.size());
    model.parameters().back()->value.fill(static_cast<float>(mean));
  }

  Adam<float> opt(AdamConfig{cfg.lr});
  Rng shuffle_rng(derive_seed(cfg.seed, "train/shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "train/dropout"));
  RunContext ctx{true, &dropout_rng};

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<float>> best_params;

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order.begin(), order.end());
    double sq_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::size_t n = end - begin;
      const Tensor input = gather(train, order, begin, end);
      model.zero_grad();
      const auto out = model.forward(input, ctx);
      std::vector<double> preds(n), ys(n);
      Tensor grad({n, 1});
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        preds[i] = out.mos[i];
        ys[i] = train.labels[order[begin + i]];
        const double r = preds[i] - ys[i];
        loss += r * r;
        grad[i] = static_cast<float>(2.0 * r / static_cast<double>(n));
      }
      sq_sum += loss;
      loss /= static_cast<double>(n);
      model.backward(grad);
      opt.step(model.parameters());
      if (on_batch) on_batch(epoch, batch_index, preds, ys, loss);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_mse = sq_sum / static_cast<double>(train.size());
    entry.val_mse = std::numeric_limits<double>::quiet_NaN();
    if (val != nullptr && val->size() > 0) {
      entry.val_mse = mean_squared(predict(model, *val), val->labels);
      if (cfg.keep_best_val && entry.val_mse < best_val) {
        best_val = entry.val_mse;
        result.selected_epoch = epoch;
        best_params.clear();
        for (const auto& [name, t] : model.named_tensors()) {
          best_params.emplace_back(t->values().begin(), t->values().end());
        }
      }
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  if (cfg.keep_best_val && !best_params.empty()) {
    auto tensors = model.named_tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      std::copy(best_params[i].begin(), best_params[i].end(), tensors[i].second->data());
    }
  } else {
    result.selected_epoch = cfg.epochs;
  }
  return result;
}

std::vector<double> predict(Model<float>& model, const LabeledFeatures& set,
                            std::size_t batch_size) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> out;
  out.reserve(set.size());
  for (std::size_t begin = 0; begin < set.size(); begin += batch_size) {
    const std::size_t end = std::min(set.size(), begin + batch_size);
    const auto res = model.forward(gather(set, order, begin, end), RunContext{});
    for (std::size_t i = 0; i < end - begin; ++i) out.push_back(res.mos[i]);
  }
  return out;
}

std::vector<std::vector<float>> latents(Model<float>& model,
                                        const std::vector<SpectralFeature>& features,
                                        std::size_t batch_size) {
  std::vector<std::vector<float>> out;
  out.reserve(features.size());
  std::size_t begin = 0;
  while (begin < features.size()) {
    // Batch only runs of equally sized features.
    std::vector<const SpectralFeature*> batch{&features[begin]};
    std::size_t end = begin + 1;
    while (end < features.size() && batch.size() < batch_size &&
           features[end].frames == features[begin].frames) {
      batch.push_back(&features[end++]);
    }
    if (features[begin].kind != model.spec().input_kind) {
      throw InvalidInputError("feature kind does not match the model input");
    }
    const auto res = model.forward(feature_batch(batch), RunContext{});
    const std::size_t d = res.latent.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out.emplace_back(res.latent.data() + i * d, res.latent.data() + (i + 1) * d);
    }
    begin = end;
  }
  return out;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path,
                        std::uint64_t seed, const std::string& config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "# seed=" << seed << " config_hash=" << config_hash << "\n";
  f << "epoch,train_mse,val_mse\n";
  f.precision(10);
  for (const auto& e : log) {
    f << e.epoch << ',' << e.train_mse << ',';
    if (std::isnan(e.val_mse)) {
      f << "";
    } else {
      f << e.val_mse;
    }
    f << '\n';
  }
}

}  // namespace sqalab
