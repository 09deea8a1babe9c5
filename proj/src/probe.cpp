#include "sqalab/probe.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "sqalab/error.hpp"
#include "sqalab/metrics.hpp"
#include "sqalab/rng.hpp"

namespace sqalab {

namespace fs = std::filesystem;

void EmbeddingSet::validate() const {
  if (labels.size() != vectors.size() || ids.size() != vectors.size()) {
    throw InvalidInputError("embedding set fields differ in length");
  }
  const std::size_t d = dim();
  for (const auto& v : vectors) {
    if (v.size() != d) throw InvalidInputError("embedding rows differ in dimension");
  }
}

EmbeddingSet EmbeddingSet::subset(const std::vector<std::size_t>& rows) const {
  EmbeddingSet out;
  out.source = source;
  for (std::size_t r : rows) {
    out.vectors.push_back(vectors.at(r));
    out.labels.push_back(labels.at(r));
    out.ids.push_back(ids.at(r));
  }
  return out;
}

std::vector<std::string> EmbeddingSet::classes() const {
  std::vector<std::string> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::pair<EmbeddingSet, EmbeddingSet> stratified_split(const EmbeddingSet& set,
                                                       double train_frac, std::uint64_t seed) {
  set.validate();
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw InvalidInputError("train fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < set.size(); ++i) members[set.labels[i]].push_back(i);
  for (const auto& [cls, rows] : members) {
    if (rows.size() < 2) throw InvalidInputError("class '" + cls + "' has fewer than 2 members");
  }

  struct Quota {
    std::string cls;
    std::size_t take;
    double frac;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [cls, rows] : members) {
    const double exact = static_cast<double>(rows.size()) * train_frac;
    const auto take = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({cls, take, exact - static_cast<double>(take)});
    assigned += take;
  }
  const auto target =
      static_cast<std::size_t>(std::floor(static_cast<double>(set.size()) * train_frac));
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return quotas[a].frac > quotas[b].frac; });
  for (std::size_t i : order) {
    if (assigned >= target) break;
    if (quotas[i].take + 1 < members[quotas[i].cls].size()) {
      ++quotas[i].take;
      ++assigned;
    }
  }

  std::vector<std::size_t> train_rows, test_rows;
  for (const auto& q : quotas) {
    auto rows = members[q.cls];
    Rng rng(derive_seed(seed, "stratified_split/" + q.cls));
    rng.shuffle(rows.begin(), rows.end());
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(q.take));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(q.take), rows.end());
  }
  return {set.subset(train_rows), set.subset(test_rows)};
}

// ---------------------------------------------------------------------------

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

KnnClassifier::KnnClassifier(const EmbeddingSet& train, std::size_t k) : train_(train), k_(k) {
  train.validate();
  if (train.size() == 0) throw InvalidInputError("kNN training set is empty");
  if (k == 0 || k > train.size()) {
    throw InvalidInputError("k must lie in [1, " + std::to_string(train.size()) + "]");
  }
  classes_ = train.classes();
  class_of_.resize(train.size());
  centroids_.assign(classes_.size(), std::vector<double>(train.dim(), 0.0));
  std::vector<std::size_t> counts(classes_.size(), 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto c = static_cast<std::size_t>(
        std::lower_bound(classes_.begin(), classes_.end(), train.labels[i]) - classes_.begin());
    class_of_[i] = c;
    ++counts[c];
    for (std::size_t j = 0; j < train.dim(); ++j) centroids_[c][j] += train.vectors[i][j];
  }
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    for (double& v : centroids_[c]) v /= static_cast<double>(counts[c]);
  }
}

std::vector<std::string> KnnClassifier::rank(std::span<const double> query) const {
  if (query.size() != train_.dim()) {
    throw InvalidInputError("query has dimension " + std::to_string(query.size()) +
                            ", training set " + std::to_string(train_.dim()));
  }
  std::vector<std::pair<double, std::size_t>> dist(train_.size());
  for (std::size_t i = 0; i < train_.size(); ++i) {
    dist[i] = {squared_distance(query, train_.vectors[i]), i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());

  const std::size_t nc = classes_.size();
  std::vector<std::size_t> votes(nc, 0);
  std::vector<double> nearest(nc, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < k_; ++i) {
    const std::size_t c = class_of_[dist[i].second];
    ++votes[c];
    nearest[c] = std::min(nearest[c], dist[i].first);
  }
  std::vector<std::size_t> voted, rest;
  for (std::size_t c = 0; c < nc; ++c) (votes[c] > 0 ? voted : rest).push_back(c);
  std::sort(voted.begin(), voted.end(), [&](auto a, auto b) {
    if (votes[a] != votes[b]) return votes[a] > votes[b];
    if (nearest[a] != nearest[b]) return nearest[a] < nearest[b];
    return a < b;
  });
  std::vector<double> centroid_dist(nc, 0.0);
  for (std::size_t c : rest) centroid_dist[c] = squared_distance(query, centroids_[c]);
  std::sort(rest.begin(), rest.end(), [&](auto a, auto b) {
    if (centroid_dist[a] != centroid_dist[b]) return centroid_dist[a] < centroid_dist[b];
    return a < b;
  });
  std::vector<std::string> out;
  out.reserve(nc);
  for (std::size_t c : voted) out.push_back(classes_[c]);
  for (std::size_t c : rest) out.push_back(classes_[c]);
  return out;
}

std::vector<std::string> knn_rank(const EmbeddingSet& train, std::span<const double> query,
                                  std::size_t k) {
  return KnnClassifier(train, k).rank(query);
}

ProbeResult knn_probe(const EmbeddingSet& train, const EmbeddingSet& test, std::size_t k) {
  test.validate();
  const KnnClassifier knn(train, k);
  ProbeResult out;
  out.rankings.resize(test.size());
  const auto n = static_cast<std::ptrdiff_t>(test.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) out.rankings[i] = knn.rank(test.vectors[i]);
  out.top1 = top_k_accuracy(out.rankings, test.labels, 1);
  out.top3 = top_k_accuracy(out.rankings, test.labels, 3);
  return out;
}

// ---------------------------------------------------------------------------

LabeledClips load_manifest_clips(const DatasetManifest& manifest, const fs::path& root,
                                 Split split) {
  const auto entries = manifest.select(split);
  LabeledClips out;
  out.clips.resize(entries.size());
  for (const auto* e : entries) {
    out.labels.push_back(e->label.class_name());
    out.ids.push_back(e->clip_id);
  }
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
  std::vector<std::string> errors(entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out.clips[i] = load_clip(root / entries[i]->degraded_path);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }
  return out;
}

LabeledClips load_class_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> classes;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) classes.push_back(entry.path());
  }
  std::sort(classes.begin(), classes.end());
  LabeledClips out;
  for (const auto& cdir : classes) {
    const std::string cls = cdir.filename().string();
    for (auto& clip : load_corpus(cdir)) {
      out.ids.push_back(cls + "/" + clip.source_id);
      out.labels.push_back(cls);
      out.clips.push_back(std::move(clip));
    }
  }
  if (out.clips.empty()) throw InvalidInputError("no class-subdirectory WAV files under " + dir.string());
  return out;
}

EmbeddingSet random_projection_features(const LabeledClips& clips, std::size_t out_dim,
                                        std::uint64_t seed) {
  if (clips.clips.empty()) throw InvalidInputError("no clips to project");
  if (out_dim == 0) throw InvalidInputError("projection dimension must be positive");
  const std::size_t d = clips.clips[0].size();
  for (const auto& c : clips.clips) {
    if (c.size() != d) throw InvalidInputError("random projection needs equal-length clips");
  }
  EmbeddingSet out;
  out.source = "random_projection";
  out.labels = clips.labels;
  out.ids = clips.ids;
  out.vectors.assign(clips.clips.size(), std::vector<double>(out_dim, 0.0));
  Rng rng(derive_seed(seed, "random_projection"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> direction(d);
  for (std::size_t j = 0; j < out_dim; ++j) {
    for (auto& v : direction) v = rng.normal() * scale;
    for (std::size_t n = 0; n < clips.clips.size(); ++n) {
      const auto& s = clips.clips[n].samples;
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += direction[i] * s[i];
      out.vectors[n][j] = acc;
    }
  }
  return out;
}

EmbeddingSet mfcc_features(const LabeledClips& clips, const FramingConfig& cfg,
                           MfccAggregation aggregation) {
  EmbeddingSet out;
  out.source = "mfcc";
  out.labels = clips.labels;
  out.ids = clips.ids;
  out.vectors.resize(clips.clips.size());
  const auto n = static_cast<std::ptrdiff_t>(clips.clips.size());
  std::vector<std::string> errors(clips.clips.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto f = mfcc(clips.clips[i], cfg);
      if (aggregation == MfccAggregation::Flatten) {
        out.vectors[i].assign(f.values.begin(), f.values.end());
      } else {
        std::vector<double> mean(f.bins, 0.0);
        for (std::size_t t = 0; t < f.frames; ++t) {
          for (std::size_t b = 0; b < f.bins; ++b) mean[b] += f.at(t, b);
        }
        for (double& v : mean) v /= static_cast<double>(f.frames);
        out.vectors[i] = std::move(mean);
      }
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw InvalidInputError(e);
  }
  for (const auto& v : out.vectors) {
    if (v.size() != out.dim()) {
      throw InvalidInputError("clips yield different MFCC frame counts; use mean-over-time");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// y = C x for the covariance of the centered rows, without forming C.
void covariance_apply(const std::vector<std::vector<double>>& centered,
                      std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (const auto& row : centered) {
    double proj = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) proj += row[j] * x[j];
    for (std::size_t j = 0; j < row.size(); ++j) y[j] += proj * row[j];
  }
  const double inv = 1.0 / static_cast<double>(centered.size() - 1);
  for (double& v : y) v *= inv;
}

double norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void fix_sign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

Pca2d pca_2d(const EmbeddingSet& set) {
  set.validate();
  const std::size_t n = set.size(), d = set.dim();
  if (n < 3 || d < 2) throw InvalidInputError("PCA needs at least 3 points of dimension >= 2");

  Pca2d out;
  out.mean.assign(d, 0.0);
  for (const auto& v : set.vectors) {
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += v[j];
  }
  for (double& m : out.mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> centered(n, std::vector<double>(d));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      centered[i][j] = set.vectors[i][j] - out.mean[j];
      total += centered[i][j] * centered[i][j];
    }
  }
  total /= static_cast<double>(n - 1);
  if (!(total > 0.0)) throw DegenerateInputError("all embeddings are identical");

  constexpr double kTolerance = 1e-10;
  constexpr int kMaxIterations = 200000;
  Rng rng(derive_seed(0, "pca/start"));
  std::array<double, 2> lambda{};
  std::vector<double> cv(d);
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    auto deflate = [&](std::vector<double>& y, std::span<const double> x) {
      if (comp == 1) {
        const auto& u = out.components[0];
        double ux = 0.0;
        for (std::size_t j = 0; j < d; ++j) ux += u[j] * x[j];
        for (std::size_t j = 0; j < d; ++j) y[j] -= lambda[0] * ux * u[j];
      }
    };
    auto orthogonalize = [&](std::vector<double>& x) {
      if (comp == 1) {
        const auto& u = out.components[0];
        double ux = 0.0;
        for (std::size_t j = 0; j < d; ++j) ux += u[j] * x[j];
        for (std::size_t j = 0; j < d; ++j) x[j] -= ux * u[j];
      }
      const double nv = norm(x);
      for (double& e : x) e /= nv;
    };
    orthogonalize(v);
    bool null_space = false;
    for (int it = 0; it < kMaxIterations; ++it) {
      covariance_apply(centered, v, cv);
      deflate(cv, v);
      const double nc = norm(cv);
      if (nc <= 1e-13 * total) {
        null_space = true;
        break;
      }
      for (double& e : cv) e /= nc;
      if (comp == 1) orthogonalize(cv);
      double diff = 0.0;
      for (std::size_t j = 0; j < d; ++j) diff = std::max(diff, std::abs(cv[j] - v[j]));
      v.swap(cv);
      if (diff < kTolerance) break;
    }
    if (null_space) {
      lambda[comp] = 0.0;
    } else {
      covariance_apply(centered, v, cv);
      double rq = 0.0;
      for (std::size_t j = 0; j < d; ++j) rq += v[j] * cv[j];
      lambda[comp] = std::max(0.0, rq);
    }
    fix_sign(v);
    out.components[comp] = std::move(v);
  }
  out.explained_ratio = {lambda[0] / total, lambda[1] / total};
  out.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 2; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += centered[i][j] * out.components[c][j];
      out.coords[i][c] = acc;
    }
  }
  return out;
}

void write_pca_csv(const EmbeddingSet& set, const Pca2d& pca, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f.precision(10);
  f << "clip_id,class,pc1,pc2\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    f << set.ids[i] << ',' << set.labels[i] << ',' << pca.coords[i][0] << ','
      << pca.coords[i][1] << '\n';
  }
}

namespace {

std::string class_color(std::size_t i, std::size_t count) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (count <= 10) return kPalette[i];
  std::ostringstream s;
  s << "hsl(" << (360 * i) / count << ",65%," << (i % 2 ? 35 : 55) << "%)";
  return s.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string pca_svg(const EmbeddingSet& set, const Pca2d& pca, const std::string& title) {
  const auto classes = set.classes();
  constexpr double W = 820, H = 560, left = 60, top = 40, plot_w = 520, plot_h = 460;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  for (std::size_t i = 0; i < pca.coords.size(); ++i) {
    const auto& p = pca.coords[i];
    if (i == 0) {
      xmin = xmax = p[0];
      ymin = ymax = p[1];
    }
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  const double xs = xmax > xmin ? plot_w / (xmax - xmin) : 1.0;
  const double ys = ymax > ymin ? plot_h / (ymax - ymin) : 1.0;

  std::ostringstream s;
  s.precision(5);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
    << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
  s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << top + plot_h + 30
    << "\" text-anchor=\"middle\">PC1 (" << 100 * pca.explained_ratio[0] << "%)</text>\n";
  s << "<text transform=\"translate(" << left - 30 << "," << top + plot_h / 2
    << ") rotate(-90)\" text-anchor=\"middle\">PC2 (" << 100 * pca.explained_ratio[1]
    << "%)</text>\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto c = static_cast<std::size_t>(
        std::lower_bound(classes.begin(), classes.end(), set.labels[i]) - classes.begin());
    const double x = left + (pca.coords[i][0] - xmin) * xs;
    const double y = top + plot_h - (pca.coords[i][1] - ymin) * ys;
    s << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\""
      << class_color(c, classes.size()) << "\" fill-opacity=\"0.8\"><title>"
      << xml_escape(set.ids[i]) << "</title></circle>\n";
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const double y = top + 10 + 18 * static_cast<double>(c);
    s << "<circle cx=\"" << left + plot_w + 20 << "\" cy=\"" << y << "\" r=\"5\" fill=\""
      << class_color(c, classes.size()) << "\"/>";
    s << "<text x=\"" << left + plot_w + 32 << "\" y=\"" << y + 4 << "\">"
      << xml_escape(classes[c]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace sqalab
