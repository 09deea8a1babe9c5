#include <doctest.h>

#include <cmath>

#include "sqalab/error.hpp"
#include "sqalab/impairments.hpp"
#include "sqalab/labeling.hpp"
#include "sqalab/synth_corpus.hpp"
#include "test_util.hpp"

using namespace sqalab;

TEST_CASE("identical clips score 1 + 4 / (1 + e^-3)") {
  const auto x = synth_speech(1, 2.0, "x");
  CHECK(proxy_distance(x, x) == 0.0);
  const auto label = proxy_label(x, x);
  CHECK(label.metric_name == "proxy");
  CHECK(label.score == doctest::Approx(1.0 + 4.0 / (1.0 + std::exp(-3.0))).epsilon(1e-12));
  CHECK(label.score == doctest::Approx(4.81).epsilon(1e-3));
}

TEST_CASE("proxy score decreases with distance") {
  double prev = proxy_score(0.0);
  for (int i = 1; i <= 100; ++i) {
    const double s = proxy_score(0.05 * i);
    REQUIRE(s < prev);
    REQUIRE(s > 1.0);
    prev = s;
  }
}

TEST_CASE("heavy noise scores at most 2.5") {
  const auto x = synth_speech(2, 3.0, "x");
  const auto noise = testutil::clip_of(testutil::noise(20000, 5, 0.2));
  const auto noisy = add_background_noise(x, noise, -10.0);
  CHECK(proxy_label(x, noisy).score <= 2.5);
  CHECK_THROWS_AS(proxy_distance(x, testutil::clip_of(std::vector<float>(100, 0.0f))),
                  InvalidInputError);
}

TEST_CASE("external scorer output is parsed") {
  const auto label = external_label("a.wav", "b.wav", "echo 3.5", "pesq");
  CHECK(label.score == 3.5);
  CHECK(label.metric_name == "pesq");
}

TEST_CASE("external scorer failures carry stderr") {
  try {
    external_label("a.wav", "b.wav", "echo broken >&2; exit 3", "pesq");
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
  }
  CHECK_THROWS_AS(external_label("a.wav", "b.wav", "echo not-a-number", "pesq"), ProviderError);
}

TEST_CASE("template values are shell quoted") {
  CHECK(shell_quote("a b") == "'a b'");
  CHECK(shell_quote("it's") == "'it'\\''s'");
  CHECK(expand_template("cmp {clean} {degraded}", {{"clean", "x y.wav"}, {"degraded", "z.wav"}}) ==
        "cmp 'x y.wav' 'z.wav'");
  const auto r = run_command("printf %s " + shell_quote("x y"));
  CHECK(r.exit_code == 0);
  CHECK(r.out == "x y");
}

TEST_CASE("warm cache makes no external calls") {
  testutil::TempDir tmp("label-cache");
  DatasetManifest m;
  for (int i = 0; i < 3; ++i) {
    ManifestEntry e;
    e.clip_id = "c" + std::to_string(i);
    e.clean_id = e.clip_id;
    e.clean_path = "c.wav";
    e.degraded_path = "d.wav";
    e.label.specs.push_back({});
    m.entries.push_back(e);
  }
  ExternalProvider provider("mock", "echo 2.25");
  auto first = label_manifest(m, tmp.path(), provider);
  CHECK(first.computed == 3);
  CHECK(provider.invocations() == 3);
  auto second = label_manifest(m, tmp.path(), provider);
  CHECK(second.computed == 0);
  CHECK(second.cached == 3);
  CHECK(provider.invocations() == 3);
  CHECK(m.entries[1].labels.at("mock") == 2.25);
  label_manifest(m, tmp.path(), provider, true);
  CHECK(provider.invocations() == 6);
}
