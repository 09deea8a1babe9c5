#include <doctest.h>

#include <cmath>

#include "checks.hpp"
#include "sqalab/adam.hpp"
#include "sqalab/checkpoint.hpp"
#include "sqalab/error.hpp"
#include "sqalab/metrics.hpp"
#include "sqalab/model.hpp"
#include "sqalab/train.hpp"
#include "test_util.hpp"

using namespace sqalab;

namespace {

Tensor random_input(std::size_t n, std::size_t frames, std::size_t bins, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, 1, frames, bins});
  for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
  return t;
}

SpectralFeature random_feature(std::size_t frames, std::size_t bins, Rng& rng) {
  SpectralFeature f;
  f.frames = frames;
  f.bins = bins;
  f.values.resize(frames * bins);
  for (auto& v : f.values) v = static_cast<float>(rng.normal());
  return f;
}

LabeledFeatures toy_set(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledFeatures set;
  for (std::size_t i = 0; i < n; ++i) {
    set.ids.push_back("c" + std::to_string(i));
    set.classes.push_back("Identity");
    set.features.push_back(random_feature(12, 16, rng));
    set.labels.push_back(rng.uniform(1.5, 4.5));
  }
  return set;
}

ModelSpec tiny_spec() { return dnsmos_plus_custom({4, 4, 8, 8, 8}, 8, 16); }

}  // namespace

TEST_CASE("finite-difference gradients") {
  for (const auto& c : checks::gradient_checks()) {
    CHECK_MESSAGE(c.pass, c.name << " " << c.detail);
  }
}

TEST_CASE("silu values") {
  Rng rng(1);
  auto layer = make_layer<double>(ActivationSpec{ActivationKind::Silu}, {1, 3}, "a", rng);
  BasicTensor<double> x({1, 3}, std::vector<double>{0.0, 10.0, -1.0});
  const auto y = layer->forward(x, {});
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(9.99955).epsilon(1e-6));
  CHECK(y[2] == doctest::Approx(-1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
}

TEST_CASE("published latent sizes and structure") {
  CHECK(dnsmos_plus_spec().latent_dim() == 128);
  CHECK(dnsmos_spec().latent_dim() == 64);
  CHECK(dnsmos_plus_spec().input_kind == FeatureKind::LogStft);
  CHECK(dnsmos_spec().input_kind == FeatureKind::LogMel);
  CHECK(dnsmos_plus_spec(4).latent_dim() == 32);

  auto bad = tiny_spec();
  bad.layers.push_back(GlobalMaxPoolSpec{});
  CHECK_THROWS_AS(bad.validate(), InvalidInputError);
  auto no_head = tiny_spec();
  no_head.layers.pop_back();
  CHECK_THROWS_AS(no_head.validate(), InvalidInputError);
}

TEST_CASE("latent length does not depend on clip length") {
  Model<float> model(dnsmos_plus_spec(8), 3);
  for (std::size_t frames : {499u, 999u}) {
    const auto out = model.forward(random_input(1, frames, 257, frames), {});
    CHECK(out.latent.dims() == Shape{1, 16});
    CHECK(out.mos.dims() == Shape{1, 1});
  }
  CHECK_THROWS_AS(model.forward(random_input(1, 3, 257, 1), {}), InvalidInputError);
  CHECK_THROWS_AS(model.forward(random_input(1, 40, 100, 1), {}), InvalidInputError);
}

TEST_CASE("silent input gives finite, repeatable output") {
  Model<float> model(dnsmos_spec(8), 4);
  Tensor x({1, 1, 200, 64}, -7.0f);
  const auto a = model.forward(x, {});
  const auto b = model.forward(x, {});
  CHECK(a.mos.all_finite());
  CHECK(a.mos == b.mos);
  CHECK(a.latent == b.latent);
}

TEST_CASE("global max pool ignores frame order") {
  Rng rng(5);
  auto gmp = make_layer<float>(GlobalMaxPoolSpec{}, {1, 3, 6, 4}, "g", rng);
  Tensor x({1, 3, 6, 4});
  for (auto& v : x.storage()) v = static_cast<float>(rng.normal());
  Tensor shuffled = x;
  const std::vector<std::size_t> perm{4, 2, 5, 0, 1, 3};
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t f = 0; f < 4; ++f) shuffled[(c * 6 + t) * 4 + f] = x[(c * 6 + perm[t]) * 4 + f];
    }
  }
  CHECK(gmp->forward(x, {}) == gmp->forward(shuffled, {}));
}

TEST_CASE("batchnorm inference ignores batch composition") {
  Model<float> model(tiny_spec(), 6);
  const auto a = random_input(1, 12, 16, 1);
  const auto b = random_input(3, 12, 16, 2);
  Tensor both({4, 1, 12, 16});
  std::copy(a.storage().begin(), a.storage().end(), both.storage().begin());
  std::copy(b.storage().begin(), b.storage().end(), both.storage().begin() + a.size());
  const auto alone = model.forward(a, {}).mos;
  const auto batched = model.forward(both, {}).mos;
  CHECK(alone[0] == batched[0]);
}

TEST_CASE("adam step by hand") {
  std::vector<float> p{1.0f, 2.0f, 1.0f};
  std::vector<float> g{1.0f, 0.0f, 1.0f};
  std::vector<double> m(3, 0.0), v(3, 0.0);
  AdamConfig cfg;
  adam_update<float>(p, g, m, v, 1, cfg);
  CHECK(p[0] == doctest::Approx(1.0 - 1e-4 / (1.0 + 1e-8)).epsilon(1e-7));
  CHECK(p[1] == 2.0f);
  CHECK(p[0] == p[2]);
  CHECK(m[0] == doctest::Approx(0.1));
  CHECK(v[0] == doctest::Approx(0.001));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Model<float> model(tiny_spec(), 7);
  // Move the BatchNorm running statistics away from their initial values.
  Rng drop(1);
  model.forward(random_input(4, 12, 16, 3), {true, &drop});
  const CheckpointMeta meta{7, 12, "proxy", "abcd"};
  const std::string bytes = encode_checkpoint(model, meta);
  auto loaded = decode_checkpoint(bytes);
  CHECK(loaded.meta == meta);
  const auto x = random_input(2, 20, 16, 4);
  CHECK(loaded.model->forward(x, {}).mos == model.forward(x, {}).mos);
  CHECK(encode_checkpoint(*loaded.model, meta) == bytes);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CorruptFileError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CorruptFileError);
  CHECK_THROWS_AS(decode_checkpoint("JUNK" + bytes.substr(4)), FormatError);

  auto json = spec_to_json(tiny_spec());
  json["layers"][0]["type"] = "transformer";
  CHECK_THROWS_AS(spec_from_json(json), VersionError);
}

TEST_CASE("checkpoint files") {
  testutil::TempDir tmp("ckpt");
  Model<float> model(tiny_spec(), 8);
  save_checkpoint(tmp.path() / "m.sqal", model, {});
  const auto loaded = load_checkpoint(tmp.path() / "m.sqal");
  CHECK(loaded.model->spec() == model.spec());
  CHECK_THROWS(load_checkpoint(tmp.path() / "missing.sqal"));
}

TEST_CASE("overfitting eight clips") {
  const auto set = toy_set(8, 9);
  Model<float> model(tiny_spec(), 10);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.lr = 1e-2;
  cfg.seed = 10;
  const auto result = train_model(model, set, nullptr, cfg);
  CHECK(result.log.back().train_mse < 0.05);
  CHECK(std::isnan(result.log.back().val_mse));
  CHECK(mse(predict(model, set), set.labels) < 0.05);
}

TEST_CASE("first batch loss is the mean squared residual") {
  const auto set = toy_set(10, 11);
  Model<float> model(tiny_spec(), 12);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  bool seen = false;
  train_model(model, set, nullptr, cfg,
              [&](std::size_t epoch, std::size_t batch, const std::vector<double>& preds,
                  const std::vector<double>& labels, double loss) {
                if (epoch != 1 || batch != 0) return;
                seen = true;
                CHECK(preds.size() == 4);
                double acc = 0.0;
                for (std::size_t i = 0; i < preds.size(); ++i) {
                  acc += (preds[i] - labels[i]) * (preds[i] - labels[i]);
                }
                CHECK(loss == doctest::Approx(acc / 4.0).epsilon(1e-9));
              });
  CHECK(seen);
}

TEST_CASE("training is reproducible") {
  const auto set = toy_set(10, 13);
  const auto val = toy_set(4, 14);
  auto run = [&] {
    Model<float> model(tiny_spec(), 15);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 3;
    cfg.seed = 16;
    train_model(model, set, &val, cfg);
    return encode_checkpoint(model, {});
  };
  CHECK(run() == run());
}

TEST_CASE("keep best validation epoch") {
  const auto set = toy_set(8, 17);
  const auto val = toy_set(4, 18);
  Model<float> model(tiny_spec(), 19);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  cfg.keep_best_val = true;
  const auto result = train_model(model, set, &val, cfg);
  std::size_t best = 1;
  for (const auto& e : result.log) {
    if (e.val_mse < result.log[best - 1].val_mse) best = e.epoch;
  }
  CHECK(result.selected_epoch == best);
  CHECK(mse(predict(model, val), val.labels) ==
        doctest::Approx(result.log[best - 1].val_mse).epsilon(1e-5));
}
