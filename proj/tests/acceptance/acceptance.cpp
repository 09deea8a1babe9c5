// Acceptance runner: one PASS/FAIL line per criterion.
//
//   sqalab_acceptance [--criterion N]... [--work DIR]
//
// Criteria 4, 5, 6 and 8 drive the command-line pipeline in-process under the
// work directory. 5 and 6 share one trained desk model, reused when present.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "check_util.hpp"
#include "sqalab/checkpoint.hpp"
#include "sqalab/cli.hpp"
#include "sqalab/dataset.hpp"
#include "sqalab/metrics.hpp"
#include "sqalab/model.hpp"
#include "sqalab/rng.hpp"
#include "sqalab/train.hpp"

namespace fs = std::filesystem;
using namespace sqalab;
using checks::fmt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

void cli(const std::vector<std::string>& args) {
  std::cout << "  $ sqalab";
  for (const auto& a : args) std::cout << ' ' << a;
  std::cout << std::endl;
  const int code = run_cli(args, std::cout, std::cerr);
  if (code != 0) {
    throw std::runtime_error("sqalab exited with code " + std::to_string(code));
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads the single result row of a report written by eval or probe.
std::map<std::string, double> read_result(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line, header, row;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) {
      header = line;
    } else {
      row = line;
    }
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    return parts;
  };
  const auto keys = split(header);
  const auto values = split(row);
  std::map<std::string, double> result;
  for (std::size_t i = 0; i < keys.size() && i < values.size(); ++i) {
    if (!values[i].empty() && i >= 3) result[keys[i]] = std::stod(values[i]);
  }
  return result;
}

Outcome from_checks(const checks::CheckList& list) {
  std::size_t passed = 0;
  std::string failures;
  for (const auto& c : list) {
    if (c.pass) {
      ++passed;
    } else {
      failures += "\n    failed: " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")");
    }
  }
  return {passed == list.size(),
          std::to_string(passed) + "/" + std::to_string(list.size()) + " checks" + failures};
}

// ---------------------------------------------------------------------------
// Determinism

void smoke_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  const std::string run = (dir / "run").string();
  const std::vector<std::string> common = {"--seed", "11", "--threads", "1", "--run-dir", run};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    return args;
  };
  cli(with({"gen", "speech", "--out", (dir / "clean").string(), "--count", "80",
            "--min-seconds", "1.5", "--max-seconds", "3"}));
  cli(with({"gen", "noise", "--out", (dir / "noise").string(), "--count", "6",
            "--max-seconds", "3"}));
  cli(with({"synth", "--clean-dir", (dir / "clean").string(), "--noise-dir",
            (dir / "noise").string(), "--clip-seconds", "2"}));
  cli(with({"label"}));
  cli(with({"train", "--model", "dnsmos_plus", "--width-divisor", "8", "--epochs", "10",
            "--batch-size", "16", "--lr", "1e-3"}));
}

Outcome criterion_determinism() {
  const fs::path a = g_work / "determinism_a";
  const fs::path b = g_work / "determinism_b";
  smoke_pipeline(a);
  smoke_pipeline(b);
  const auto manifest = read_manifest(a / "run" / "manifest.jsonl");
  const bool manifests = slurp(a / "run" / "manifest.jsonl") == slurp(b / "run" / "manifest.jsonl");
  const bool ckpts = slurp(a / "run" / "checkpoints" / "dnsmos_plus.sqal") ==
                     slurp(b / "run" / "checkpoints" / "dnsmos_plus.sqal");
  return {manifest.entries.size() == 160 && manifests && ckpts,
          std::to_string(manifest.entries.size()) + " clips, manifests " +
              (manifests ? "identical" : "DIFFER") + ", checkpoints " +
              (ckpts ? "identical" : "DIFFER")};
}

// ---------------------------------------------------------------------------
// Desk experiment

constexpr const char* kDeskSeed = "2024";
const std::vector<std::string> kDeskSplit = {"--train-count", "256", "--val-count", "32",
                                             "--test-count", "32"};
const std::vector<std::string> kDeskTrain = {
    "train", "--model", "dnsmos_plus", "--width-divisor", "4", "--epochs", "30",
    "--batch-size", "4", "--lr", "1e-3"};

fs::path desk_dir() { return g_work / "desk"; }
fs::path desk_run() { return desk_dir() / "run"; }

std::vector<std::string> desk_args(std::vector<std::string> args) {
  for (const std::string& a : {std::string("--seed"), std::string(kDeskSeed),
                               std::string("--run-dir"), desk_run().string()}) {
    args.push_back(a);
  }
  return args;
}

// Builds the desk corpus and trains the quarter-width model once; later calls
// reuse the checkpoint when the recorded recipe matches.
void ensure_desk_model() {
  std::string recipe = kDeskSeed;
  for (const auto& a : kDeskSplit) recipe += " " + a;
  for (const auto& a : kDeskTrain) recipe += " " + a;
  const fs::path stamp = desk_dir() / "recipe.txt";
  if (fs::exists(stamp) && slurp(stamp) == recipe &&
      fs::exists(desk_run() / "checkpoints" / "dnsmos_plus.sqal")) {
    std::cout << "  reusing trained desk model in " << desk_run().string() << "\n";
    return;
  }
  fs::remove_all(desk_dir());
  const auto t0 = std::chrono::steady_clock::now();
  cli(desk_args({"gen", "speech", "--out", (desk_dir() / "clean").string(), "--count", "320",
                 "--min-seconds", "3", "--max-seconds", "6"}));
  cli(desk_args({"gen", "noise", "--out", (desk_dir() / "noise").string(), "--count", "12",
                 "--max-seconds", "6"}));
  std::vector<std::string> synth = {"synth", "--clean-dir", (desk_dir() / "clean").string(),
                                    "--noise-dir", (desk_dir() / "noise").string(),
                                    "--clip-seconds", "4"};
  synth.insert(synth.end(), kDeskSplit.begin(), kDeskSplit.end());
  cli(desk_args(synth));
  cli(desk_args({"label"}));
  cli(desk_args(kDeskTrain));
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  std::cout << "  desk corpus and model built in " << fmt(minutes) << " min\n";
  std::ofstream(stamp) << recipe;
}

Outcome criterion_clustering() {
  ensure_desk_model();
  // Latents of the training clips, as in the probe's definition.
  cli(desk_args({"probe", "--split", "train", "--pca"}));
  cli(desk_args({"probe", "--split", "train", "--baseline", "mfcc", "--pca"}));
  cli(desk_args({"probe", "--split", "train", "--baseline", "random-projection", "--pca"}));
  const double latent = read_result(desk_run() / "reports" / "probe_dnsmos_plus.csv").at("top1");
  const double mfcc = read_result(desk_run() / "reports" / "probe_mfcc.csv").at("top1");
  const double rp = read_result(desk_run() / "reports" / "probe_random_projection.csv").at("top1");
  const double chance = 1.0 / 16.0;
  const bool ordering = latent > mfcc && mfcc > rp;
  const bool strong = latent >= 3.0 * chance;
  const bool rp_near_chance = rp >= chance / 3.0 && rp <= 3.0 * chance;
  return {ordering && strong && rp_near_chance,
          "top1 latent " + fmt(latent) + ", mfcc " + fmt(mfcc) + ", random projection " + fmt(rp) +
              (ordering ? "" : " [ordering fails]") + (strong ? "" : " [latent < 3x chance]") +
              (rp_near_chance ? "" : " [random projection outside chance band]")};
}

Outcome criterion_quality() {
  ensure_desk_model();
  cli(desk_args({"eval", "--split", "val"}));
  const auto trained = read_result(desk_run() / "reports" / "eval_dnsmos_plus.csv");

  // Untrained baseline: same architecture and init seed, no optimization.
  const auto ckpt = load_checkpoint(desk_run() / "checkpoints" / "dnsmos_plus.sqal");
  const auto manifest = read_manifest(desk_run() / "manifest.jsonl");
  const auto val = load_labeled_features(manifest, desk_run(), Split::Val, "proxy",
                                         ckpt.model->spec().input_kind);
  Model<float> untrained(ckpt.model->spec(), derive_seed(ckpt.meta.seed, "model"));
  const auto preds = predict(untrained, val);
  const double base_pcc = pcc(preds, val.labels);
  const double base_srcc = srcc(preds, val.labels);

  const double p = trained.at("pcc");
  const double s = trained.at("srcc");
  return {p >= 0.5 && p > base_pcc && s > base_srcc,
          "val pcc " + fmt(p) + ", srcc " + fmt(s) + "; untrained pcc " + fmt(base_pcc) +
              ", srcc " + fmt(base_srcc)};
}

// ---------------------------------------------------------------------------
// Environmental-sound probe

Outcome criterion_noise_probe() {
  const fs::path dir = g_work / "environment";
  fs::remove_all(dir);
  const std::vector<std::string> common = {"--seed", "5", "--run-dir", (dir / "run").string()};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    return args;
  };
  cli(with({"gen", "environment", "--out", (dir / "corpus").string(), "--count", "40",
            "--max-seconds", "5"}));
  cli(with({"probe", "--baseline", "mfcc", "--corpus", (dir / "corpus").string()}));
  const double top1 = read_result(dir / "run" / "reports" / "probe_mfcc.csv").at("top1");
  return {top1 >= 0.15, "mfcc top1 " + fmt(top1) + " (chance 0.10, needs >= 0.15)"};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  std::string work = "acceptance_work";
  app.add_option("--criterion", selected, "Criterion number (repeatable; default all)")
      ->check(CLI::Range(1, 8));
  app.add_option("--work", work, "Scratch directory for pipeline runs");
  CLI11_PARSE(app, argc, argv);
  g_work = fs::absolute(work);
  fs::create_directories(g_work);

  const std::vector<Criterion> criteria = {
      {1, "gradient suite", [] { return from_checks(checks::gradient_checks()); }},
      {2, "metric oracles", [] { return from_checks(checks::metric_checks()); }},
      {3, "impairment invariants", [] { return from_checks(checks::impairment_checks()); }},
      {4, "pipeline determinism", criterion_determinism},
      {5, "desk clustering experiment", criterion_clustering},
      {6, "desk quality prediction", criterion_quality},
      {7, "kNN and PCA oracles", [] { return from_checks(checks::knn_pca_checks()); }},
      {8, "environmental-sound MFCC probe", criterion_noise_probe},
  };

  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << ": " << c.name << " ("
              << fmt(secs) << " s) " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
