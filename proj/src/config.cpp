#include "sqalab/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "sqalab/error.hpp"
#include "sqalab/rng.hpp"

namespace sqalab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

ConfigValue parse_value(const std::string& raw, int line) {
  auto fail = [&](const std::string& why) {
    throw ConfigError("config line " + std::to_string(line) + ": " + why);
  };
  if (raw.empty()) fail("missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') fail("unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        const char c = raw[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += raw[i];
      }
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  std::string digits;
  for (char c : raw) {
    if (c != '_') digits += c;
  }
  try {
    std::size_t used = 0;
    if (digits.find_first_of(".eE") == std::string::npos ||
        digits.rfind("0x", 0) == 0) {
      const long long v = std::stoll(digits, &used, 0);
      if (used == digits.size()) return static_cast<std::int64_t>(v);
    } else {
      const double v = std::stod(digits, &used);
      if (used == digits.size()) return v;
    }
  } catch (const std::exception&) {
  }
  fail("cannot parse value '" + raw + "'");
  return false;
}

}  // namespace

std::map<std::string, ConfigValue> parse_toml(const std::string& text) {
  std::map<std::string, ConfigValue> out;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("config line " + std::to_string(number) + ": bad section");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_key(section)) {
        throw ConfigError("config line " + std::to_string(number) + ": bad section name");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) throw ConfigError("config line " + std::to_string(number) + ": bad key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) {
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key " + full);
    }
    out[full] = parse_value(trim(s.substr(eq + 1)), number);
  }
  return out;
}

namespace {

template <typename T>
T as(const ConfigValue& v, const std::string& key);

template <>
std::string as<std::string>(const ConfigValue& v, const std::string& key) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("config key " + key + " must be a string");
}
template <>
double as<double>(const ConfigValue& v, const std::string& key) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ConfigError("config key " + key + " must be a number");
}
template <>
std::int64_t as<std::int64_t>(const ConfigValue& v, const std::string& key) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ConfigError("config key " + key + " must be an integer");
}
template <>
bool as<bool>(const ConfigValue& v, const std::string& key) {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw ConfigError("config key " + key + " must be true or false");
}

std::size_t as_count(const ConfigValue& v, const std::string& key) {
  const auto i = as<std::int64_t>(v, key);
  if (i < 0) throw ConfigError("config key " + key + " must not be negative");
  return static_cast<std::size_t>(i);
}

}  // namespace

void RunConfig::apply(const std::map<std::string, ConfigValue>& values) {
  using Setter = std::function<void(const ConfigValue&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"seed", [&](auto& v, auto& k) { seed = static_cast<std::uint64_t>(as<std::int64_t>(v, k)); }},
      {"threads", [&](auto& v, auto& k) { threads = static_cast<int>(as_count(v, k)); }},
      {"paths.run_dir", [&](auto& v, auto& k) { run_dir = as<std::string>(v, k); }},
      {"paths.clean_dir", [&](auto& v, auto& k) { clean_dir = as<std::string>(v, k); }},
      {"paths.noise_dir", [&](auto& v, auto& k) { noise_dir = as<std::string>(v, k); }},
      {"synth.clip_seconds", [&](auto& v, auto& k) { clip_seconds = as<double>(v, k); }},
      {"synth.train_count", [&](auto& v, auto& k) { train_count = as_count(v, k); }},
      {"synth.val_count", [&](auto& v, auto& k) { val_count = as_count(v, k); }},
      {"synth.test_count", [&](auto& v, auto& k) { test_count = as_count(v, k); }},
      {"synth.external_codec", [&](auto& v, auto& k) { external_codec = as<std::string>(v, k); }},
      {"label.metric", [&](auto& v, auto& k) { label_metric = as<std::string>(v, k); }},
      {"label.command", [&](auto& v, auto& k) { label_cmd = as<std::string>(v, k); }},
      {"model.name", [&](auto& v, auto& k) { model = as<std::string>(v, k); }},
      {"model.width_divisor", [&](auto& v, auto& k) { width_divisor = as_count(v, k); }},
      {"train.epochs", [&](auto& v, auto& k) { epochs = as_count(v, k); }},
      {"train.batch_size", [&](auto& v, auto& k) { batch_size = as_count(v, k); }},
      {"train.lr", [&](auto& v, auto& k) { lr = as<double>(v, k); }},
      {"train.keep_best_val", [&](auto& v, auto& k) { keep_best_val = as<bool>(v, k); }},
      {"probe.k", [&](auto& v, auto& k) { this->k = as_count(v, k); }},
      {"probe.train_frac", [&](auto& v, auto& k) { train_frac = as<double>(v, k); }},
      {"probe.split", [&](auto& v, auto& k) { probe_split = as<std::string>(v, k); }},
      {"probe.projection_dim", [&](auto& v, auto& k) { projection_dim = as_count(v, k); }},
  };
  for (const auto& [key, value] : values) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(value, key);
  }
}

std::string RunConfig::canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "seed=" << seed << "\nclip_seconds=" << clip_seconds << "\ntrain_count=" << train_count
    << "\nval_count=" << val_count << "\ntest_count=" << test_count
    << "\nexternal_codec=" << external_codec << "\nlabel_metric=" << label_metric
    << "\nlabel_cmd=" << label_cmd << "\nmodel=" << model << "\nwidth_divisor=" << width_divisor
    << "\nepochs=" << epochs << "\nbatch_size=" << batch_size << "\nlr=" << lr
    << "\nkeep_best_val=" << keep_best_val << "\nk=" << k << "\ntrain_frac=" << train_frac
    << "\nprobe_split=" << probe_split << "\nprojection_dim=" << projection_dim << "\n";
  return s.str();
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
  return buf;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  RunConfig cfg;
  cfg.apply(parse_toml(ss.str()));
  return cfg;
}

}  // namespace sqalab
