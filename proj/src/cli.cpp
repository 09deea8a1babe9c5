#include "sqalab/cli.hpp"

#include <omp.h>
#include <stdlib.h>

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "sqalab/checkpoint.hpp"
#include "sqalab/config.hpp"
#include "sqalab/dataset.hpp"
#include "sqalab/labeling.hpp"
#include "sqalab/metrics.hpp"
#include "sqalab/probe.hpp"
#include "sqalab/synth_corpus.hpp"
#include "sqalab/train.hpp"

namespace sqalab {

namespace fs = std::filesystem;

CodecHook external_codec_hook(const std::string& command_template) {
  return [command_template](const AudioClip& clip, double bit_rate) {
    std::string dir_template = (fs::temp_directory_path() / "sqalab-codec-XXXXXX").string();
    if (mkdtemp(dir_template.data()) == nullptr) throw IoError("cannot create a temporary directory");
    const fs::path dir = dir_template;
    const fs::path in = dir / "in.wav", out = dir / "out.wav";
    try {
      write_wav(clip, in);
      std::ostringstream rate;
      rate << bit_rate;
      const std::string cmd = expand_template(
          command_template,
          {{"in", shell_quote(in.string())}, {"out", shell_quote(out.string())}, {"bitrate", rate.str()}});
      const auto res = run_command(cmd);
      if (res.exit_code != 0) {
        throw ProviderError("codec command failed with exit code " + std::to_string(res.exit_code),
                            res.out + res.err);
      }
      auto decoded = load_clip(out);
      fs::remove_all(dir);
      return decoded;
    } catch (...) {
      std::error_code ec;
      fs::remove_all(dir, ec);
      throw;
    }
  };
}

namespace {

struct Paths {
  fs::path run;
  fs::path manifest() const { return run / "manifest.jsonl"; }
  fs::path checkpoints() const { return run / "checkpoints"; }
  fs::path reports() const { return run / "reports"; }
  fs::path figures() const { return run / "figures"; }
};

std::string provenance(const RunConfig& cfg) {
  return "# seed=" + std::to_string(cfg.seed) + " config_hash=" + cfg.hash() + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

DatasetManifest require_manifest(const Paths& p) {
  if (!fs::exists(p.manifest())) {
    throw ConfigError("no manifest at " + p.manifest().string() + " (run synth first)");
  }
  return read_manifest(p.manifest());
}

// ---------------------------------------------------------------------------

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (cfg.clean_dir.empty()) throw ConfigError("synth needs a clean corpus directory (--clean-dir)");
  if (!fs::is_directory(cfg.clean_dir)) {
    throw ConfigError("clean corpus directory does not exist: " + cfg.clean_dir.string());
  }
  if (cfg.noise_dir.empty() || !fs::is_directory(cfg.noise_dir)) {
    throw ConfigError("AddBackgroundNoise needs an existing noise directory (--noise-dir)");
  }
  const auto clean = load_corpus(cfg.clean_dir);
  const auto noise = load_corpus(cfg.noise_dir);
  if (noise.empty()) throw ConfigError("noise directory holds no WAV files");

  SynthesisOptions opt;
  opt.seed = cfg.seed;
  opt.clip_seconds = cfg.clip_seconds;
  opt.out_dir = cfg.run_dir;
  opt.config_hash = cfg.hash();
  if (cfg.train_count + cfg.val_count + cfg.test_count == 0) {
    opt.counts = default_split_counts(clean.size());
  } else {
    opt.counts = {cfg.train_count, cfg.val_count, cfg.test_count};
  }
  if (!cfg.external_codec.empty()) opt.external_codec = external_codec_hook(cfg.external_codec);
  const auto manifest = synthesize_dataset(clean, noise, opt);
  const auto problems = validate_manifest(manifest);
  if (!problems.empty()) throw InvalidInputError("manifest check failed: " + problems.front());
  write_manifest(manifest, Paths{cfg.run_dir}.manifest());
  out << "synthesized " << manifest.entries.size() << " clips (train " << opt.counts.train
      << ", val " << opt.counts.val << ", test " << opt.counts.test << " clean clips) -> "
      << Paths{cfg.run_dir}.manifest().string() << "\n";
}

void cmd_label(const RunConfig& cfg, bool force, std::ostream& out) {
  const Paths p{cfg.run_dir};
  auto manifest = require_manifest(p);
  std::unique_ptr<LabelProvider> provider;
  if (cfg.label_cmd.empty()) {
    if (cfg.label_metric != "proxy") {
      throw ConfigError("metric '" + cfg.label_metric + "' needs --label-cmd");
    }
    provider = std::make_unique<ProxyProvider>();
  } else {
    const std::string metric = cfg.label_metric == "proxy" ? "external" : cfg.label_metric;
    provider = std::make_unique<ExternalProvider>(metric, cfg.label_cmd);
  }
  const auto stats = label_manifest(manifest, cfg.run_dir, *provider, force);
  write_manifest(manifest, p.manifest());
  out << "labeled " << stats.computed << " clips with '" << provider->metric() << "' ("
      << stats.cached << " cached)\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Paths p{cfg.run_dir};
  const auto manifest = require_manifest(p);
  const ModelSpec spec = model_spec_by_name(cfg.model, cfg.width_divisor);
  out << "loading features (" << to_string(spec.input_kind) << ")\n";
  const auto train =
      load_labeled_features(manifest, cfg.run_dir, Split::Train, cfg.label_metric, spec.input_kind);
  const auto val =
      load_labeled_features(manifest, cfg.run_dir, Split::Val, cfg.label_metric, spec.input_kind);
  Model<float> model(spec, derive_seed(cfg.seed, "model"));
  out << spec.name << ": " << model.parameter_count() << " parameters, latent "
      << spec.latent_dim() << ", " << train.size() << " train / " << val.size() << " val clips\n";

  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.seed = cfg.seed;
  tc.keep_best_val = cfg.keep_best_val;
  const auto result = train_model(model, train, &val, tc, {}, [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " train_mse " << e.train_mse << " val_mse " << e.val_mse << "\n";
    out.flush();
  });
  const CheckpointMeta meta{cfg.seed, result.selected_epoch, cfg.label_metric, cfg.hash()};
  const fs::path ckpt = p.checkpoints() / (spec.name + ".sqal");
  save_checkpoint(ckpt, model, meta);
  write_training_log(result.log, p.reports() / ("train_" + spec.name + ".csv"), cfg.seed,
                     cfg.hash());
  out << "checkpoint -> " << ckpt.string() << "\n";
}

fs::path checkpoint_path(const Paths& p, const std::string& given, const std::string& model) {
  if (!given.empty()) return given;
  return p.checkpoints() / (model_spec_by_name(model).name + ".sqal");
}

void cmd_eval(const RunConfig& cfg, const std::string& ckpt_arg, bool oracle, std::ostream& out) {
  const Paths p{cfg.run_dir};
  const auto manifest = require_manifest(p);
  const Split split = split_from_string(cfg.probe_split);
  std::vector<double> preds, labels;
  std::string model_name = "oracle", metric = cfg.label_metric;
  if (oracle) {
    for (const auto* e : manifest.select(split)) {
      auto it = e->labels.find(metric);
      if (it == e->labels.end()) throw InvalidInputError("clip '" + e->clip_id + "' lacks '" + metric + "'");
      labels.push_back(it->second);
    }
    preds = labels;
  } else {
    const fs::path path = checkpoint_path(p, ckpt_arg, cfg.model);
    auto ckpt = load_checkpoint(path);
    metric = ckpt.meta.label_metric;
    model_name = ckpt.model->spec().name;
    const auto set = load_labeled_features(manifest, cfg.run_dir, split, metric,
                                           ckpt.model->spec().input_kind);
    preds = predict(*ckpt.model, set);
    labels = set.labels;
  }
  ResultRow row;
  row.model = model_name;
  row.label_metric = metric;
  row.split = cfg.probe_split;
  row.mse = mse(preds, labels);
  row.pcc = pcc(preds, labels);
  row.srcc = srcc(preds, labels);
  const std::string text =
      provenance(cfg) + kResultHeader + "\n" + format_result_row(row) + "\n";
  write_text(p.reports() / ("eval_" + model_name + ".csv"), text);
  out << kResultHeader << "\n" << format_result_row(row) << "\n";
}

struct EmbeddingRequest {
  std::string checkpoint;
  std::string baseline;
  fs::path corpus;
};

std::pair<EmbeddingSet, std::string> build_embeddings(const RunConfig& cfg,
                                                      const EmbeddingRequest& req,
                                                      std::ostream& out) {
  const Paths p{cfg.run_dir};
  LabeledClips clips;
  std::string split_name;
  if (!req.corpus.empty()) {
    clips = load_class_directory(req.corpus);
    split_name = "corpus";
  } else {
    const auto manifest = require_manifest(p);
    clips = load_manifest_clips(manifest, cfg.run_dir, split_from_string(cfg.probe_split));
    split_name = cfg.probe_split;
  }
  if (clips.clips.empty()) throw InvalidInputError("no clips to probe");
  out << "embedding " << clips.clips.size() << " clips\n";
  EmbeddingSet set;
  if (req.baseline == "random-projection") {
    set = random_projection_features(clips, cfg.projection_dim, derive_seed(cfg.seed, "probe/rp"));
  } else if (req.baseline == "mfcc") {
    bool equal = true;
    for (const auto& c : clips.clips) equal = equal && c.size() == clips.clips[0].size();
    if (!equal) out << "clips differ in duration; averaging MFCCs over time\n";
    set = mfcc_features(clips, {}, equal ? MfccAggregation::Flatten : MfccAggregation::MeanOverTime);
  } else if (!req.baseline.empty()) {
    throw ConfigError("unknown baseline '" + req.baseline + "' (random-projection or mfcc)");
  } else {
    const fs::path path = checkpoint_path(p, req.checkpoint, cfg.model);
    auto ckpt = load_checkpoint(path);
    auto& model = *ckpt.model;
    std::vector<SpectralFeature> feats(clips.clips.size());
    const auto n = static_cast<std::ptrdiff_t>(feats.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      feats[i] = compute_feature(clips.clips[i], model.spec().input_kind);
    }
    const auto lat = latents(model, feats);
    set.source = model.spec().name;
    set.labels = clips.labels;
    set.ids = clips.ids;
    for (const auto& v : lat) set.vectors.emplace_back(v.begin(), v.end());
  }
  return {set, split_name};
}

void export_pca(const RunConfig& cfg, const EmbeddingSet& set, std::ostream& out) {
  const Paths p{cfg.run_dir};
  const auto pca = pca_2d(set);
  const fs::path csv = p.figures() / ("pca_" + set.source + ".csv");
  write_pca_csv(set, pca, csv);
  std::ostringstream title;
  title << set.source << " latent PCA, " << set.size() << " clips (seed " << cfg.seed
        << ", config " << cfg.hash() << ")";
  write_text(p.figures() / ("pca_" + set.source + ".svg"), pca_svg(set, pca, title.str()));
  out << "pca explained variance " << pca.explained_ratio[0] << " / " << pca.explained_ratio[1]
      << " -> " << csv.string() << "\n";
}

void cmd_probe(const RunConfig& cfg, const EmbeddingRequest& req, bool with_pca,
               std::ostream& out) {
  auto [set, split_name] = build_embeddings(cfg, req, out);
  auto [train, test] = stratified_split(set, cfg.train_frac, derive_seed(cfg.seed, "probe/split"));
  const std::size_t k = std::min(cfg.k, train.size());
  const auto res = knn_probe(train, test, k);
  ResultRow row;
  row.model = set.source;
  row.label_metric = "-";
  row.split = split_name;
  row.top1 = res.top1;
  row.top3 = res.top3;
  const std::string text = provenance(cfg) + kResultHeader + "\n" + format_result_row(row) + "\n";
  write_text(Paths{cfg.run_dir}.reports() / ("probe_" + set.source + ".csv"), text);
  out << kResultHeader << "\n" << format_result_row(row) << "\n";
  if (with_pca) export_pca(cfg, test, out);
}

void cmd_gen(const std::string& kind, const fs::path& dir, std::size_t count, double min_s,
             double max_s, std::uint64_t seed, std::ostream& out) {
  if (kind == "speech") {
    write_corpus(synth_speech_corpus(count, min_s, max_s, seed), dir);
  } else if (kind == "noise") {
    write_corpus(synth_noise_corpus(count, max_s, seed), dir);
  } else if (kind == "environment") {
    write_environment_corpus(dir, count, max_s, seed);
  } else {
    throw ConfigError("unknown corpus kind '" + kind + "' (speech, noise or environment)");
  }
  out << "wrote " << kind << " corpus to " << dir.string() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech-quality latent laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> run_dir;
  app.add_option("--config", config_path, "TOML run configuration");
  app.add_option("--seed", seed, "Root seed");
  app.add_option("--threads", threads, "Worker threads (1 = bit-reproducible)");
  app.add_option("--run-dir", run_dir, "Run directory");

  std::optional<std::string> clean_dir, noise_dir, external_codec;
  std::optional<double> clip_seconds;
  std::optional<std::size_t> train_count, val_count, test_count;
  auto* synth = app.add_subcommand("synth", "Synthesize the impaired corpus and manifest");
  synth->add_option("--clean-dir", clean_dir, "Clean speech WAV directory");
  synth->add_option("--noise-dir", noise_dir, "Noise WAV directory");
  synth->add_option("--external-codec", external_codec,
                    "Codec command template with {in} {out} {bitrate}");
  synth->add_option("--clip-seconds", clip_seconds, "Clip duration after crop/pad");
  synth->add_option("--train-count", train_count, "Clean clips in train");
  synth->add_option("--val-count", val_count, "Clean clips in val");
  synth->add_option("--test-count", test_count, "Clean clips in test");

  std::optional<std::string> label_cmd, metric;
  bool force = false;
  auto* label = app.add_subcommand("label", "Attach quality labels to the manifest");
  label->add_option("--label-cmd", label_cmd, "External scorer template with {clean} {degraded}");
  label->add_option("--metric", metric, "Label metric name");
  label->add_flag("--force", force, "Recompute cached scores");

  std::optional<std::string> model;
  std::optional<std::size_t> width_divisor, epochs, batch_size;
  std::optional<double> lr;
  bool keep_best_val = false;
  auto* train = app.add_subcommand("train", "Train a quality model");
  train->add_option("--model", model, "dnsmos or dnsmos_plus");
  train->add_option("--metric", metric, "Label metric to regress");
  train->add_option("--width-divisor", width_divisor, "Divide every channel count");
  train->add_option("--epochs", epochs, "Epochs (default 500)");
  train->add_option("--batch-size", batch_size, "Batch size (default 32)");
  train->add_option("--lr", lr, "Adam learning rate (default 1e-4)");
  train->add_flag("--keep-best-val", keep_best_val, "Keep the best validation epoch");

  std::string checkpoint;
  std::optional<std::string> split;
  bool oracle = false;
  auto* eval = app.add_subcommand("eval", "MSE/PCC/SRCC of a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file");
  eval->add_option("--model", model, "Model name used to locate the checkpoint");
  eval->add_option("--split", split, "Split to evaluate (default test)");
  eval->add_option("--metric", metric, "Label metric for --oracle-stub");
  eval->add_flag("--oracle-stub", oracle, "Feed labels as predictions");

  EmbeddingRequest req;
  std::optional<std::size_t> k, projection_dim;
  std::optional<double> train_frac;
  bool with_pca = false;
  std::string corpus;
  auto* probe = app.add_subcommand("probe", "kNN probe of latents or baseline features");
  auto* pca = app.add_subcommand("pca", "2-D PCA export of latents or baseline features");
  for (auto* sub : {probe, pca}) {
    sub->add_option("--checkpoint", req.checkpoint, "Checkpoint file");
    sub->add_option("--model", model, "Model name used to locate the checkpoint");
    sub->add_option("--baseline", req.baseline, "random-projection or mfcc")
        ->check(CLI::IsMember({"random-projection", "mfcc"}));
    sub->add_option("--corpus", corpus, "Directory with <class>/<clip>.wav layout");
    sub->add_option("--split", split, "Manifest split (default test)");
    sub->add_option("--projection-dim", projection_dim, "Random projection width");
  }
  probe->add_option("--k", k, "Neighbors (default 15)");
  probe->add_option("--train-frac", train_frac, "kNN fit fraction (default 0.7)");
  probe->add_flag("--pca", with_pca, "Also export PCA of the probe test side");

  std::string gen_kind, gen_out;
  std::size_t gen_count = 0;
  double gen_min = 3.0, gen_max = 8.0;
  auto* gen = app.add_subcommand("gen", "Write a synthetic speech, noise or environment corpus");
  gen->add_option("kind", gen_kind, "speech, noise or environment")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Clips (per class for environment)")->required();
  gen->add_option("--min-seconds", gen_min, "Shortest speech clip");
  gen->add_option("--max-seconds", gen_max, "Longest clip / fixed duration");

  std::string feat_in, feat_out, feat_kind = "logstft";
  auto* features = app.add_subcommand("features", "Dump a spectral feature of one WAV file");
  features->add_option("input", feat_in, "WAV file")->required();
  features->add_option("--out", feat_out, "SQFT output file")->required();
  features->add_option("--kind", feat_kind, "logstft, logmel or mfcc");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (run_dir) cfg.run_dir = *run_dir;
    if (clean_dir) cfg.clean_dir = *clean_dir;
    if (noise_dir) cfg.noise_dir = *noise_dir;
    if (external_codec) cfg.external_codec = *external_codec;
    if (clip_seconds) cfg.clip_seconds = *clip_seconds;
    if (train_count) cfg.train_count = *train_count;
    if (val_count) cfg.val_count = *val_count;
    if (test_count) cfg.test_count = *test_count;
    if (label_cmd) cfg.label_cmd = *label_cmd;
    if (metric) cfg.label_metric = *metric;
    if (model) cfg.model = *model;
    if (width_divisor) cfg.width_divisor = *width_divisor;
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (lr) cfg.lr = *lr;
    if (keep_best_val) cfg.keep_best_val = true;
    if (k) cfg.k = *k;
    if (train_frac) cfg.train_frac = *train_frac;
    if (split) cfg.probe_split = *split;
    if (projection_dim) cfg.projection_dim = *projection_dim;
    req.corpus = corpus;
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    if (*synth) {
      cmd_synth(cfg, out);
    } else if (*label) {
      cmd_label(cfg, force, out);
    } else if (*train) {
      cmd_train(cfg, out);
    } else if (*eval) {
      cmd_eval(cfg, checkpoint, oracle, out);
    } else if (*probe) {
      cmd_probe(cfg, req, with_pca, out);
    } else if (*pca) {
      auto [set, split_name] = build_embeddings(cfg, req, out);
      export_pca(cfg, set, out);
    } else if (*gen) {
      cmd_gen(gen_kind, gen_out, gen_count, gen_min, gen_max, cfg.seed, out);
    } else if (*features) {
      const auto clip = load_clip(feat_in);
      const auto kind = feat_kind == "logstft" ? FeatureKind::LogStft
                        : feat_kind == "logmel" ? FeatureKind::LogMel
                        : feat_kind == "mfcc"   ? FeatureKind::Mfcc
                                                : throw ConfigError("unknown feature kind '" + feat_kind + "'");
      const auto f = compute_feature(clip, kind);
      write_feature(f, feat_out);
      out << f.frames << " frames x " << f.bins << " bins -> " << feat_out << "\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace sqalab
