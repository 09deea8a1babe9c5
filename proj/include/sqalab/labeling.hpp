#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "sqalab/audio_io.hpp"
#include "sqalab/dataset.hpp"

namespace sqalab {

struct QualityLabel {
  std::string metric_name;
  double score = 0.0;
};

inline constexpr double kProxyAlpha = 2.0;
inline constexpr double kProxyBeta = 1.5;

/// Mean absolute log-Mel difference (64 bands) between two equal-length clips.
double proxy_distance(const AudioClip& clean, const AudioClip& degraded);
/// Logistic map of a spectral distance onto the [1, 5] MOS-like scale.
double proxy_score(double distance);
QualityLabel proxy_label(const AudioClip& clean, const AudioClip& degraded);

struct CommandResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

/// Runs a shell command, capturing stdout and stderr separately.
CommandResult run_command(const std::string& command);

/// Single-quotes a string for /bin/sh.
std::string shell_quote(const std::string& s);

/// Replaces every "{key}" in `tmpl` with the shell-quoted value.
std::string expand_template(std::string tmpl,
                            const std::map<std::string, std::string>& values);

/// Invokes `command_template` with {clean} and {degraded} substituted and
/// parses a single real number from its standard output.
QualityLabel external_label(const std::filesystem::path& clean_path,
                            const std::filesystem::path& degraded_path,
                            const std::string& command_template,
                            const std::string& metric_name);

class LabelProvider {
 public:
  virtual ~LabelProvider() = default;
  virtual std::string metric() const = 0;
  virtual double score(const std::filesystem::path& clean,
                       const std::filesystem::path& degraded) = 0;
  /// Pure providers may be called concurrently.
  virtual bool thread_safe() const { return false; }
};

class ProxyProvider : public LabelProvider {
 public:
  std::string metric() const override { return "proxy"; }
  double score(const std::filesystem::path& clean,
               const std::filesystem::path& degraded) override;
  bool thread_safe() const override { return true; }
};

class ExternalProvider : public LabelProvider {
 public:
  ExternalProvider(std::string metric, std::string command_template)
      : metric_(std::move(metric)), template_(std::move(command_template)) {}

  std::string metric() const override { return metric_; }
  double score(const std::filesystem::path& clean,
               const std::filesystem::path& degraded) override;

  std::size_t invocations() const { return invocations_; }

 private:
  std::string metric_;
  std::string template_;
  std::size_t invocations_ = 0;
};

struct LabelStats {
  std::size_t computed = 0;
  std::size_t cached = 0;
};

/// Fills entry.labels[provider.metric()] for every entry lacking it (or all
/// entries when `force`). Existing scores act as the cache.
LabelStats label_manifest(DatasetManifest& manifest,
                          const std::filesystem::path& root,
                          LabelProvider& provider, bool force = false);

}  // namespace sqalab
