#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "checks.hpp"
#include "sqalab/error.hpp"
#include "sqalab/features.hpp"
#include "sqalab/metrics.hpp"
#include "sqalab/probe.hpp"
#include "test_util.hpp"

using namespace sqalab;
namespace fs = std::filesystem;

namespace {

EmbeddingSet labeled_points(const std::map<std::string, std::size_t>& counts) {
  EmbeddingSet set;
  for (const auto& [cls, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) {
      set.vectors.push_back({static_cast<double>(i), static_cast<double>(cls.size())});
      set.labels.push_back(cls);
      set.ids.push_back(cls + std::to_string(i));
    }
  }
  return set;
}

}  // namespace

TEST_CASE("metric oracles") {
  for (const auto& c : checks::metric_checks()) CHECK_MESSAGE(c.pass, c.name << " " << c.detail);
}

TEST_CASE("knn and pca oracles") {
  for (const auto& c : checks::knn_pca_checks()) CHECK_MESSAGE(c.pass, c.name << " " << c.detail);
}

TEST_CASE("metric examples") {
  const std::vector<double> a{1, 2, 3, 4};
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK_THROWS_AS(mse(std::vector<double>{}, std::vector<double>{}), InvalidInputError);
  CHECK_THROWS_AS(mse(a, std::vector<double>{1}), InvalidInputError);

  std::vector<double> affine, neg, shuffled{1, 3, 2, 4}, cubed;
  for (double v : a) {
    affine.push_back(2 * v + 3);
    neg.push_back(-v);
    cubed.push_back(v * v * v);
  }
  CHECK(pcc(a, affine) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pcc(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pcc(a, shuffled) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(srcc(a, cubed) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(srcc(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(srcc(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}),
                  DegenerateInputError);
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("top-k accuracy") {
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::string> truth;
  for (int i = 0; i < 10; ++i) {
    rankings.push_back({"a", "b", "c"});
    truth.push_back(i < 7 ? "a" : (i < 9 ? "b" : "c"));
  }
  CHECK(top_k_accuracy(rankings, truth, 1) == doctest::Approx(0.7));
  CHECK(top_k_accuracy(rankings, truth, 2) == doctest::Approx(0.9));
  CHECK(top_k_accuracy(rankings, truth, 3) == 1.0);
  CHECK_THROWS_AS(top_k_accuracy(rankings, truth, 0), InvalidInputError);
}

TEST_CASE("result rows follow the report schema") {
  ResultRow row;
  row.model = "dnsmos_plus";
  row.label_metric = "proxy";
  row.split = "val";
  row.mse = 0.25;
  row.pcc = 1.0;
  CHECK(std::string(kResultHeader) == "model,label_metric,split,mse,pcc,srcc,top1,top3");
  CHECK(format_result_row(row) == "dnsmos_plus,proxy,val,0.25,1,,,");
}

TEST_CASE("stratified split counts") {
  std::map<std::string, std::size_t> counts;
  for (int c = 0; c < 16; ++c) counts["class" + std::to_string(c)] = 100;
  const auto set = labeled_points(counts);
  const auto [train, test] = stratified_split(set, 0.7, 1);
  std::map<std::string, int> per_train, per_test;
  for (const auto& l : train.labels) ++per_train[l];
  for (const auto& l : test.labels) ++per_test[l];
  for (const auto& [cls, n] : counts) {
    CHECK(per_train[cls] == 70);
    CHECK(per_test[cls] == 30);
  }

  const auto odd = labeled_points({{"x", 41}});
  const auto [tr, te] = stratified_split(odd, 0.7, 1);
  CHECK(tr.size() == 28);
  CHECK(te.size() == 13);

  const auto again = stratified_split(set, 0.7, 1);
  CHECK(again.first.ids == train.ids);
  CHECK(stratified_split(set, 0.7, 2).first.ids != train.ids);
  CHECK_THROWS_AS(stratified_split(labeled_points({{"x", 5}, {"y", 1}}), 0.7, 1),
                  InvalidInputError);
}

TEST_CASE("knn ranking rules") {
  EmbeddingSet train;
  for (int i = 0; i < 5; ++i) {
    train.vectors.push_back({0.0, 0.1 * i});
    train.labels.push_back("near");
    train.ids.push_back("n" + std::to_string(i));
  }
  for (int i = 0; i < 8; ++i) {
    train.vectors.push_back({5.0, 0.1 * i});
    train.labels.push_back("far");
    train.ids.push_back("f" + std::to_string(i));
  }
  const std::vector<double> q{0.0, 0.0};
  CHECK(knn_rank(train, q, 3).front() == "near");
  // With every point voting, the larger class wins.
  CHECK(knn_rank(train, q, train.size()).front() == "far");
  CHECK(knn_rank(train, q, 3).size() == 2);
  CHECK_THROWS_AS(knn_rank(train, std::vector<double>{1.0}, 3), InvalidInputError);
  CHECK_THROWS_AS(KnnClassifier(train, 0), InvalidInputError);
}

TEST_CASE("single-class probe is perfect") {
  const auto set = labeled_points({{"only", 20}});
  const auto [train, test] = stratified_split(set, 0.5, 3);
  CHECK(knn_probe(train, test, 3).top1 == 1.0);
}

TEST_CASE("random projection features") {
  LabeledClips clips;
  clips.clips.push_back(testutil::clip_of(std::vector<float>(400, 0.0f)));
  clips.clips.push_back(testutil::clip_of(testutil::noise(400, 1, 0.5)));
  clips.labels = {"a", "b"};
  clips.ids = {"z", "n"};
  const auto f = random_projection_features(clips, 16, 7);
  CHECK(f.dim() == 16);
  CHECK(f.source == "random_projection");
  for (double v : f.vectors[0]) CHECK(v == 0.0);
  CHECK(random_projection_features(clips, 16, 7).vectors == f.vectors);

  // Directions have variance 1/d, so E||Px||^2 = (out_dim / d) ||x||^2.
  double norm = 0.0;
  for (float v : clips.clips[1].samples) norm += static_cast<double>(v) * v;
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto g = random_projection_features(clips, 16, seed);
    double s = 0.0;
    for (double v : g.vectors[1]) s += v * v;
    mean += s / 1000.0;
  }
  CHECK(std::abs(mean / (norm * 16.0 / 400.0) - 1.0) < 0.05);

  clips.clips[1].samples.resize(300);
  CHECK_THROWS_AS(random_projection_features(clips, 16, 7), InvalidInputError);
}

TEST_CASE("mfcc baseline features") {
  LabeledClips clips;
  clips.clips.push_back(testutil::clip_of(testutil::noise(80000, 2, 0.2)));
  clips.clips.push_back(clips.clips[0]);
  clips.labels = {"a", "a"};
  clips.ids = {"x", "y"};
  const auto f = mfcc_features(clips);
  CHECK(f.dim() == 499 * 12);
  CHECK(f.vectors[0] == f.vectors[1]);
  const auto direct = mfcc(clips.clips[0]);
  CHECK(std::equal(direct.values.begin(), direct.values.end(), f.vectors[0].begin(),
                   [](float a, double b) { return static_cast<double>(a) == b; }));
  CHECK(mfcc_features(clips, {}, MfccAggregation::MeanOverTime).dim() == 12);

  clips.clips[1].samples.resize(40000);
  CHECK_THROWS_AS(mfcc_features(clips), InvalidInputError);
}

TEST_CASE("pca on simple shapes") {
  EmbeddingSet line;
  for (int i = 0; i < 20; ++i) {
    line.vectors.push_back({static_cast<double>(i), 2.0 * i});
    line.labels.push_back("l");
    line.ids.push_back(std::to_string(i));
  }
  const auto p = pca_2d(line);
  CHECK(p.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.explained_ratio[1] == doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(4);
  EmbeddingSet iso;
  for (int i = 0; i < 10000; ++i) {
    iso.vectors.push_back({rng.normal(), rng.normal()});
    iso.labels.push_back("g");
    iso.ids.push_back(std::to_string(i));
  }
  const auto q = pca_2d(iso);
  CHECK(std::abs(q.explained_ratio[0] - 0.5) <= 0.02);
  CHECK(std::abs(q.explained_ratio[1] - 0.5) <= 0.02);

  EmbeddingSet flat = line;
  for (auto& v : flat.vectors) v = {1.0, 1.0};
  CHECK_THROWS_AS(pca_2d(flat), DegenerateInputError);
}

TEST_CASE("class directory ingestion and pca export") {
  testutil::TempDir tmp("classdir");
  for (const std::string cls : {"dog", "rain"}) {
    fs::create_directories(tmp.path() / "corpus" / cls);
    for (int i = 0; i < 3; ++i) {
      write_wav(testutil::clip_of(testutil::noise(1600, i + cls.size(), 0.2)),
                tmp.path() / "corpus" / cls / (cls + std::to_string(i) + ".wav"));
    }
  }
  const auto clips = load_class_directory(tmp.path() / "corpus");
  REQUIRE(clips.clips.size() == 6);
  CHECK(clips.labels.front() == "dog");
  CHECK(clips.labels.back() == "rain");
  CHECK(clips.ids.front() == "dog/dog0");

  const auto set = random_projection_features(clips, 8, 1);
  const auto pca = pca_2d(set);
  write_pca_csv(set, pca, tmp.path() / "pca.csv");
  std::ifstream in(tmp.path() / "pca.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') ++rows;
  }
  CHECK(rows == 7);
  const auto svg = pca_svg(set, pca, "test");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("rain") != std::string::npos);
}
