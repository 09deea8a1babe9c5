#include "sqalab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sqalab/error.hpp"

namespace sqalab {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

std::string_view to_string(Half half) {
  return half == Half::OneImpairment ? "one_impairment" : "two_impairment";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw InvalidInputError("unknown split: " + std::string(name));
}

Half half_from_string(std::string_view name) {
  if (name == "one_impairment") return Half::OneImpairment;
  if (name == "two_impairment") return Half::TwoImpairment;
  throw InvalidInputError("unknown half: " + std::string(name));
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(&e);
  }
  return out;
}

namespace {

json spec_to_json(const ImpairmentSpec& spec) {
  json j;
  j["class"] = class_name(spec.cls);
  j["params"] = spec.params;
  if (spec.noise_source_id) j["noise_source_id"] = *spec.noise_source_id;
  return j;
}

ImpairmentSpec spec_from_json(const json& j) {
  ImpairmentSpec spec;
  spec.cls = impairment_class_from_name(j.at("class").get<std::string>());
  spec.params = j.at("params").get<std::map<std::string, double>>();
  if (j.contains("noise_source_id")) {
    spec.noise_source_id = j.at("noise_source_id").get<std::string>();
  }
  return spec;
}

}  // namespace

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& e : manifest.entries) {
    json j;
    j["schema_version"] = manifest.schema_version;
    j["seed"] = manifest.seed;
    j["config_hash"] = manifest.config_hash;
    j["clip_id"] = e.clip_id;
    j["clean_id"] = e.clean_id;
    j["degraded_path"] = e.degraded_path;
    j["clean_path"] = e.clean_path;
    j["composite_label"] = e.label.class_name();
    json specs = json::array();
    for (const auto& s : e.label.specs) specs.push_back(spec_to_json(s));
    j["params"] = std::move(specs);
    j["labels"] = e.labels;
    j["split"] = to_string(e.split);
    j["half"] = to_string(e.half);
    j["output_gain"] = e.output_gain;
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text) {
  DatasetManifest manifest;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const int version = j.at("schema_version").get<int>();
      if (version != kManifestSchemaVersion) {
        throw VersionError("unsupported manifest schema version " +
                           std::to_string(version));
      }
      if (first) {
        manifest.schema_version = version;
        manifest.seed = j.at("seed").get<std::uint64_t>();
        manifest.config_hash = j.value("config_hash", "");
        first = false;
      }
      ManifestEntry e;
      e.clip_id = j.at("clip_id").get<std::string>();
      e.clean_id = j.at("clean_id").get<std::string>();
      e.degraded_path = j.at("degraded_path").get<std::string>();
      e.clean_path = j.at("clean_path").get<std::string>();
      for (const auto& s : j.at("params")) e.label.specs.push_back(spec_from_json(s));
      if (e.label.class_name() != j.at("composite_label").get<std::string>()) {
        throw FormatError("composite_label does not match params");
      }
      e.labels = j.at("labels").get<std::map<std::string, double>>();
      e.split = split_from_string(j.at("split").get<std::string>());
      e.half = half_from_string(j.at("half").get<std::string>());
      e.output_gain = j.value("output_gain", 1.0);
      manifest.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_jsonl(manifest);
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_jsonl(buf.str());
}

SplitCounts default_split_counts(std::size_t corpus_size) {
  if (corpus_size < 3) throw InvalidInputError("corpus needs at least 3 clips");
  SplitCounts c;
  c.val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                       std::llround(corpus_size * 3000.0 / 28539.0)));
  c.test = c.val;
  c.train = corpus_size - c.val - c.test;
  return c;
}

namespace {

struct WorkItem {
  std::size_t clean_index;
  std::string clean_id;
  Split split;
  Half half;
  std::string class_name;
};

// Classes for `count` slots, cycling through a fresh permutation of the class
// list each round so every class count is within one of count / classes.
std::vector<std::size_t> balanced_assignment(std::size_t count,
                                             std::size_t classes, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(count);
  std::vector<std::size_t> perm(classes);
  while (out.size() < count) {
    for (std::size_t i = 0; i < classes; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t i = 0; i < classes && out.size() < count; ++i) {
      out.push_back(perm[i]);
    }
  }
  return out;
}

std::string clip_id_for(const std::string& clean_id, Half half) {
  return clean_id + (half == Half::OneImpairment ? "-one" : "-two");
}

}  // namespace

DatasetManifest synthesize_dataset(const std::vector<AudioClip>& clean_corpus,
                                   const std::vector<AudioClip>& noise_corpus,
                                   const SynthesisOptions& options) {
  if (clean_corpus.empty()) throw InvalidInputError("clean corpus is empty");
  const SplitCounts counts = options.counts.total() == 0
                                 ? default_split_counts(clean_corpus.size())
                                 : options.counts;
  if (counts.total() > clean_corpus.size()) {
    throw InvalidInputError("split sizes exceed the clean corpus");
  }
  if (noise_corpus.empty()) {
    throw InvalidInputError("noise corpus is empty but AddBackgroundNoise is in the class mix");
  }

  // Order-independent view of the corpus: sort by id.
  std::vector<std::size_t> order(clean_corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clean_corpus[a].source_id < clean_corpus[b].source_id;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (clean_corpus[order[i]].source_id == clean_corpus[order[i - 1]].source_id) {
      throw InvalidInputError("duplicate clean clip id: " +
                              clean_corpus[order[i]].source_id);
    }
  }
  Rng split_rng(derive_seed(options.seed, "split"));
  split_rng.shuffle(order.begin(), order.end());
  order.resize(counts.total());

  std::map<std::string, AudioClip> noises;
  std::vector<std::string> noise_ids;
  for (const auto& n : noise_corpus) {
    if (!noises.emplace(n.source_id, n).second) {
      throw InvalidInputError("duplicate noise id: " + n.source_id);
    }
  }
  for (const auto& [id, clip] : noises) noise_ids.push_back(id);

  const auto universe = class_universe();
  std::vector<WorkItem> items;
  for (Half half : {Half::OneImpairment, Half::TwoImpairment}) {
    const bool one = half == Half::OneImpairment;
    const std::size_t offset = one ? 0 : kSingleClasses.size();
    const std::size_t classes = one ? kSingleClasses.size() : kPairClasses.size();
    Rng class_rng(derive_seed(options.seed, std::string("classes/") +
                                                std::string(to_string(half))));
    const auto assignment = balanced_assignment(order.size(), classes, class_rng);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      WorkItem item;
      item.clean_index = order[pos];
      item.clean_id = clean_corpus[order[pos]].source_id;
      item.split = pos < counts.train                 ? Split::Train
                   : pos < counts.train + counts.val ? Split::Val
                                                      : Split::Test;
      item.half = half;
      item.class_name = universe[offset + assignment[pos]];
      items.push_back(std::move(item));
    }
  }

  const auto& out_dir = options.out_dir;
  std::filesystem::create_directories(out_dir / "clean");
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    std::filesystem::create_directories(out_dir / "audio" / std::string(to_string(s)));
  }

  ImpairmentContext ctx;
  ctx.noises = &noises;
  ctx.external_codec = options.external_codec;

  std::vector<ManifestEntry> entries(items.size());
  std::vector<std::string> errors(items.size());
  const auto n_items = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t idx = 0; idx < n_items; ++idx) {
    const auto& item = items[static_cast<std::size_t>(idx)];
    try {
      const AudioClip clean =
          fix_duration(clean_corpus[item.clean_index], options.clip_seconds);
      ManifestEntry e;
      e.clean_id = item.clean_id;
      e.clip_id = clip_id_for(item.clean_id, item.half);
      e.split = item.split;
      e.half = item.half;
      e.clean_path = "clean/" + item.clean_id + ".wav";
      e.degraded_path = "audio/" + std::string(to_string(item.split)) + "/" +
                        e.clip_id + ".wav";

      Rng rng(derive_seed(options.seed,
                          item.clean_id + "/" + std::string(to_string(item.half))));
      const auto plus = item.class_name.find('+');
      if (plus == std::string::npos) {
        e.label.specs.push_back(sample_impairment(
            impairment_class_from_name(item.class_name), rng, noise_ids));
      } else {
        e.label.specs.push_back(sample_impairment(
            impairment_class_from_name(item.class_name.substr(0, plus)), rng, noise_ids));
        e.label.specs.push_back(sample_impairment(
            impairment_class_from_name(item.class_name.substr(plus + 1)), rng, noise_ids));
      }
      const std::uint64_t apply_seed = rng.next_u64();
      AudioClip degraded = apply_composite(clean, e.label, apply_seed, ctx);
      degraded.samples = fix_length(degraded.samples, clean.size());
      float peak = 0.0f;
      for (float v : degraded.samples) peak = std::max(peak, std::abs(v));
      if (peak > 1.0f) {
        e.output_gain = 1.0 / static_cast<double>(peak);
        for (float& v : degraded.samples) v = static_cast<float>(v * e.output_gain);
      }

      if (item.half == Half::OneImpairment) write_wav(clean, out_dir / e.clean_path);
      write_wav(degraded, out_dir / e.degraded_path);
      entries[static_cast<std::size_t>(idx)] = std::move(e);
    } catch (const std::exception& ex) {
      errors[static_cast<std::size_t>(idx)] = ex.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw InvalidInputError("synthesis failed: " + err);
  }

  DatasetManifest manifest;
  manifest.seed = options.seed;
  manifest.config_hash = options.config_hash;
  manifest.entries = std::move(entries);
  return manifest;
}

std::vector<std::string> validate_manifest(const DatasetManifest& manifest) {
  std::vector<std::string> problems;
  std::map<std::string, std::set<Split>> splits_of;
  std::map<std::string, std::map<Half, int>> halves_of;
  std::map<Half, std::map<std::string, std::size_t>> class_counts;
  std::map<Half, std::size_t> half_sizes;
  std::set<std::string> ids;

  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.clip_id).second) problems.push_back("duplicate clip id " + e.clip_id);
    splits_of[e.clean_id].insert(e.split);
    halves_of[e.clean_id][e.half] += 1;
    class_counts[e.half][e.label.class_name()] += 1;
    half_sizes[e.half] += 1;
    const std::size_t expected_specs = e.half == Half::OneImpairment ? 1 : 2;
    if (e.label.specs.size() != expected_specs) {
      problems.push_back(e.clip_id + ": wrong number of impairments for its half");
      continue;
    }
    try {
      e.label.validate();
    } catch (const Error& ex) {
      problems.push_back(e.clip_id + ": " + ex.what());
    }
    for (const auto& spec : e.label.specs) {
      for (const auto& range : param_ranges(spec.cls)) {
        const auto it = spec.params.find(std::string(range.name));
        if (it == spec.params.end() || it->second < range.lo || it->second > range.hi) {
          problems.push_back(e.clip_id + ": parameter " + std::string(range.name) +
                             " missing or out of range");
        }
      }
      if (spec.cls == ImpairmentClass::TimeMask) {
        const auto sf = spec.params.find("start_frac");
        if (sf == spec.params.end() || sf->second < 0.0 ||
            sf->second + spec.params.at("band_part") > 1.0 + 1e-12) {
          problems.push_back(e.clip_id + ": time mask outside clip");
        }
      }
      if (spec.cls == ImpairmentClass::AddBackgroundNoise && !spec.noise_source_id) {
        problems.push_back(e.clip_id + ": noise source not recorded");
      }
    }
  }
  for (const auto& [clean, splits] : splits_of) {
    if (splits.size() != 1) problems.push_back(clean + " appears in several splits");
  }
  for (const auto& [clean, halves] : halves_of) {
    for (Half h : {Half::OneImpairment, Half::TwoImpairment}) {
      const auto it = halves.find(h);
      if (it == halves.end() || it->second != 1) {
        problems.push_back(clean + " does not appear exactly once in " +
                           std::string(to_string(h)));
      }
    }
  }
  const auto universe = class_universe();
  for (Half h : {Half::OneImpairment, Half::TwoImpairment}) {
    const bool one = h == Half::OneImpairment;
    const std::size_t begin = one ? 0 : kSingleClasses.size();
    const std::size_t classes = one ? kSingleClasses.size() : kPairClasses.size();
    const double expected = static_cast<double>(half_sizes[h]) / classes;
    for (std::size_t c = 0; c < classes; ++c) {
      const auto& name = universe[begin + c];
      const double got = static_cast<double>(class_counts[h][name]);
      if (std::abs(got - expected) > 1.0) {
        problems.push_back(name + " count " + std::to_string(got) +
                           " deviates from ratio in " + std::string(to_string(h)));
      }
    }
  }
  return problems;
}

std::vector<AudioClip> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<AudioClip> clips;
  clips.reserve(files.size());
  for (const auto& f : files) {
    AudioClip clip = load_clip(f);
    auto rel = std::filesystem::relative(f, dir);
    rel.replace_extension();
    std::string id = rel.generic_string();
    std::replace(id.begin(), id.end(), '/', '_');
    clip.source_id = id;
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace sqalab
