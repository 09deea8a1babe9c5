#include "sqalab/labeling.hpp"

#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "sqalab/error.hpp"
#include "sqalab/features.hpp"

namespace sqalab {

double proxy_distance(const AudioClip& clean, const AudioClip& degraded) {
  if (clean.size() != degraded.size()) {
    throw InvalidInputError("proxy label needs equal-length clips");
  }
  if (clean.sample_rate != kSampleRate || degraded.sample_rate != kSampleRate) {
    throw InvalidInputError("proxy label needs 16 kHz clips");
  }
  const auto a = mel_spectrogram(clean);
  const auto b = mel_spectrogram(degraded);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    acc += std::abs(static_cast<double>(a.values[i]) - b.values[i]);
  }
  return acc / static_cast<double>(a.values.size());
}

double proxy_score(double distance) {
  return 1.0 + 4.0 / (1.0 + std::exp(kProxyAlpha * (distance - kProxyBeta)));
}

QualityLabel proxy_label(const AudioClip& clean, const AudioClip& degraded) {
  return {"proxy", proxy_score(proxy_distance(clean, degraded))};
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string expand_template(std::string tmpl,
                            const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string token = "{" + key + "}";
    const std::string quoted = shell_quote(value);
    for (auto pos = tmpl.find(token); pos != std::string::npos;
         pos = tmpl.find(token, pos + quoted.size())) {
      tmpl.replace(pos, token.size(), quoted);
    }
  }
  return tmpl;
}

CommandResult run_command(const std::string& command) {
  char err_path[] = "/tmp/sqalab-stderr-XXXXXX";
  const int fd = mkstemp(err_path);
  if (fd < 0) throw IoError("cannot create temporary file");
  close(fd);

  const std::string full = "( " + command + " ) 2>" + shell_quote(err_path);
  CommandResult result;
  FILE* pipe = popen(full.c_str(), "r");
  if (pipe == nullptr) {
    std::remove(err_path);
    throw ProviderError("cannot start command: " + command);
  }
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
    result.out.append(buf.data(), n);
  }
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;

  std::ifstream err_in(err_path);
  std::stringstream ss;
  ss << err_in.rdbuf();
  result.err = ss.str();
  std::remove(err_path);
  return result;
}

QualityLabel external_label(const std::filesystem::path& clean_path,
                            const std::filesystem::path& degraded_path,
                            const std::string& command_template,
                            const std::string& metric_name) {
  const std::string cmd = expand_template(
      command_template,
      {{"clean", clean_path.string()}, {"degraded", degraded_path.string()}});
  const auto result = run_command(cmd);
  if (result.exit_code != 0) {
    throw ProviderError("label command exited with status " +
                            std::to_string(result.exit_code) + ": " + result.err,
                        result.err);
  }
  std::istringstream in(result.out);
  double score;
  std::string trailing;
  if (!(in >> score) || (in >> trailing) || !std::isfinite(score)) {
    throw ProviderError("label command printed no single number: '" +
                            result.out + "'",
                        result.out + result.err);
  }
  return {metric_name, score};
}

double ProxyProvider::score(const std::filesystem::path& clean,
                            const std::filesystem::path& degraded) {
  return proxy_label(load_clip(clean), load_clip(degraded)).score;
}

double ExternalProvider::score(const std::filesystem::path& clean,
                               const std::filesystem::path& degraded) {
  ++invocations_;
  return external_label(clean, degraded, template_, metric_).score;
}

LabelStats label_manifest(DatasetManifest& manifest,
                          const std::filesystem::path& root,
                          LabelProvider& provider, bool force) {
  const std::string metric = provider.metric();
  std::vector<std::size_t> todo;
  LabelStats stats;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (!force && manifest.entries[i].labels.contains(metric)) {
      ++stats.cached;
    } else {
      todo.push_back(i);
    }
  }
  std::vector<double> scores(todo.size());
  std::vector<std::string> errors(todo.size());
  auto label_one = [&](std::size_t t) {
    const auto& e = manifest.entries[todo[t]];
    try {
      scores[t] = provider.score(root / e.clean_path, root / e.degraded_path);
    } catch (const std::exception& ex) {
      errors[t] = ex.what();
    }
  };
  const auto n = static_cast<std::ptrdiff_t>(todo.size());
  if (provider.thread_safe()) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < n; ++t) label_one(static_cast<std::size_t>(t));
  } else {
    for (std::ptrdiff_t t = 0; t < n; ++t) {
      label_one(static_cast<std::size_t>(t));
      if (!errors[static_cast<std::size_t>(t)].empty()) break;
    }
  }
  for (std::size_t t = 0; t < todo.size(); ++t) {
    if (!errors[t].empty()) {
      throw ProviderError("labeling " + manifest.entries[todo[t]].clip_id +
                          " failed: " + errors[t]);
    }
    manifest.entries[todo[t]].labels[metric] = scores[t];
    ++stats.computed;
  }
  return stats;
}

}  // namespace sqalab
