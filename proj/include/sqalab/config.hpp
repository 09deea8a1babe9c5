#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>

namespace sqalab {

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;

/// Parses the TOML subset used by run configs: [section] headers, key = value
/// pairs with strings, integers, floats and booleans, and # comments. Keys
/// are returned as "section.key". Errors raise ConfigError with a line number.
std::map<std::string, ConfigValue> parse_toml(const std::string& text);

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = runtime default

  std::filesystem::path run_dir = "run";
  std::filesystem::path clean_dir;
  std::filesystem::path noise_dir;

  double clip_seconds = 10.0;
  std::size_t train_count = 0;  // 0 = derived from the corpus size
  std::size_t val_count = 0;
  std::size_t test_count = 0;
  std::string external_codec;

  std::string label_metric = "proxy";
  std::string label_cmd;

  std::string model = "dnsmos_plus";
  std::size_t width_divisor = 1;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  bool keep_best_val = false;

  std::size_t k = 15;
  double train_frac = 0.7;
  std::string probe_split = "test";
  std::size_t projection_dim = 128;

  /// Overlays values from a parsed file; unknown keys raise ConfigError.
  void apply(const std::map<std::string, ConfigValue>& values);
  /// Canonical text of every setting that influences results.
  std::string canonical() const;
  /// 16 hex digits of the FNV-1a hash of canonical().
  std::string hash() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace sqalab
