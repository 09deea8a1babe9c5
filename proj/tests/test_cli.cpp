#include <doctest.h>

#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "sqalab/cli.hpp"
#include "sqalab/config.hpp"
#include "sqalab/dataset.hpp"
#include "sqalab/error.hpp"
#include "test_util.hpp"

using namespace sqalab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run sqalab_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("toml subset") {
  const auto v = parse_toml(
      "seed = 42  # root seed\n"
      "[train]\n"
      "epochs = 3\n"
      "lr = 1e-3\n"
      "keep_best_val = true\n"
      "[paths]\n"
      "run_dir = \"out dir\"\n");
  CHECK(std::get<std::int64_t>(v.at("seed")) == 42);
  CHECK(std::get<std::int64_t>(v.at("train.epochs")) == 3);
  CHECK(std::get<double>(v.at("train.lr")) == 1e-3);
  CHECK(std::get<bool>(v.at("train.keep_best_val")));
  CHECK(std::get<std::string>(v.at("paths.run_dir")) == "out dir");
  CHECK_THROWS_AS(parse_toml("seed = \n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("[train\n"), ConfigError);
}

TEST_CASE("run config overlay and hash") {
  RunConfig cfg;
  const std::string base = cfg.hash();
  CHECK(base.size() == 16);
  cfg.apply(parse_toml("seed = 7\n[train]\nepochs = 2\n"));
  CHECK(cfg.seed == 7);
  CHECK(cfg.epochs == 2);
  CHECK(cfg.hash() != base);
  RunConfig same;
  same.seed = 7;
  same.epochs = 2;
  CHECK(same.hash() == cfg.hash());
  CHECK_THROWS_AS(cfg.apply(parse_toml("[train]\nepoch = 2\n")), ConfigError);
  CHECK_THROWS_AS(cfg.apply(parse_toml("seed = \"x\"\n")), ConfigError);
}

TEST_CASE("usage errors map to exit codes") {
  CHECK(sqalab_run({}).code == kExitConfig);
  CHECK(sqalab_run({"frobnicate"}).code == kExitConfig);
  CHECK(sqalab_run({"train", "--epochs", "many"}).code == kExitConfig);
  testutil::TempDir tmp("cli-errors");
  const auto missing = sqalab_run({"synth", "--run-dir", (tmp.path() / "run").string(),
                                   "--clean-dir", (tmp.path() / "none").string(),
                                   "--noise-dir", (tmp.path() / "none").string()});
  CHECK(missing.code == kExitConfig);
  CHECK(sqalab_run({"train", "--run-dir", (tmp.path() / "run").string()}).code == kExitConfig);
  fs::create_directories(tmp.path() / "run");
  std::ofstream(tmp.path() / "run" / "manifest.jsonl") << "{broken\n";
  CHECK(sqalab_run({"train", "--run-dir", (tmp.path() / "run").string()}).code == kExitData);
  CHECK(sqalab_run({"--config", (tmp.path() / "absent.toml").string(), "label"}).code ==
        kExitConfig);
}

TEST_CASE("tiny pipeline end to end") {
  testutil::TempDir tmp("cli-pipeline");
  const auto root = tmp.path();
  const std::string run = (root / "run").string();
  std::ofstream(root / "run.toml") << "seed = 3\nthreads = 1\n[paths]\nrun_dir = \"" << run
                                   << "\"\n[train]\nepochs = 2\nbatch_size = 16\n";
  const std::string cfg = (root / "run.toml").string();

  REQUIRE(sqalab_run({"gen", "speech", "--out", (root / "clean").string(), "--count", "40",
                      "--min-seconds", "1", "--max-seconds", "2", "--config", cfg})
              .code == 0);
  REQUIRE(sqalab_run({"gen", "noise", "--out", (root / "noise").string(), "--count", "4",
                      "--max-seconds", "2", "--config", cfg})
              .code == 0);
  const std::vector<std::string> synth = {"synth", "--config", cfg, "--clean-dir",
                                          (root / "clean").string(), "--noise-dir",
                                          (root / "noise").string(), "--clip-seconds", "1.5"};
  REQUIRE(sqalab_run(synth).code == 0);
  const auto manifest_text = slurp(fs::path(run) / "manifest.jsonl");
  auto manifest = read_manifest(fs::path(run) / "manifest.jsonl");
  CHECK(manifest.entries.size() == 80);
  CHECK(validate_manifest(manifest).empty());

  REQUIRE(sqalab_run(synth).code == 0);
  CHECK(slurp(fs::path(run) / "manifest.jsonl") == manifest_text);

  SUBCASE("labels") {
    REQUIRE(sqalab_run({"label", "--config", cfg}).code == 0);
    manifest = read_manifest(fs::path(run) / "manifest.jsonl");
    std::map<std::string, std::pair<double, int>> by_class;
    for (const auto& e : manifest.entries) {
      const double s = e.labels.at("proxy");
      REQUIRE(s >= 1.0);
      REQUIRE(s <= 5.0);
      auto& [sum, n] = by_class[e.label.class_name()];
      sum += s;
      ++n;
    }
    const double identity = by_class.at("Identity").first / by_class.at("Identity").second;
    for (const auto& [cls, acc] : by_class) {
      if (cls != "Identity") CHECK_MESSAGE(acc.first / acc.second < identity, cls);
    }

    REQUIRE(sqalab_run({"label", "--config", cfg, "--metric", "mock", "--label-cmd", "echo 3.0"})
                .code == 0);
    manifest = read_manifest(fs::path(run) / "manifest.jsonl");
    for (const auto& e : manifest.entries) REQUIRE(e.labels.at("mock") == 3.0);
    CHECK(sqalab_run({"label", "--config", cfg, "--metric", "bad", "--label-cmd", "exit 1"}).code ==
          kExitProvider);

    const auto eval = sqalab_run({"eval", "--config", cfg, "--oracle-stub"});
    REQUIRE(eval.code == 0);
    const auto report = lines_of(slurp(fs::path(run) / "reports" / "eval_oracle.csv"));
    REQUIRE(report.size() == 3);
    CHECK(report[0].rfind("# seed=3 config_hash=", 0) == 0);
    CHECK(report[1] == "model,label_metric,split,mse,pcc,srcc,top1,top3");
    CHECK(report[2] == "oracle,proxy,test,0,1,1,,");

    const auto train = sqalab_run({"train", "--config", cfg, "--width-divisor", "8"});
    REQUIRE(train.code == 0);
    CHECK(fs::exists(fs::path(run) / "checkpoints" / "dnsmos_plus.sqal"));
    const auto log = lines_of(slurp(fs::path(run) / "reports" / "train_dnsmos_plus.csv"));
    REQUIRE(log.size() == 4);
    CHECK(log[1] == "epoch,train_mse,val_mse");
    CHECK(log[2].rfind("1,", 0) == 0);
    CHECK(log[3].rfind("2,", 0) == 0);

    CHECK(sqalab_run({"eval", "--config", cfg, "--split", "val"}).code == 0);
    CHECK(fs::exists(fs::path(run) / "reports" / "eval_dnsmos_plus.csv"));

    const auto probe = sqalab_run({"probe", "--config", cfg, "--split", "train", "--k", "3",
                                   "--baseline", "mfcc", "--pca"});
    REQUIRE(probe.code == 0);
    CHECK(fs::exists(fs::path(run) / "reports" / "probe_mfcc.csv"));
    const auto csv = lines_of(slurp(fs::path(run) / "figures" / "pca_mfcc.csv"));
    std::size_t points = 0;
    for (const auto& l : csv) points += !l.empty() && l[0] != '#';
    CHECK(points > 1);
    CHECK(fs::exists(fs::path(run) / "figures" / "pca_mfcc.svg"));
  }
}
