#include "sqalab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sqalab/error.hpp"

namespace sqalab {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len) {
  if (x.size() != y.size()) throw InvalidInputError("series lengths differ");
  if (x.size() < min_len) {
    throw InvalidInputError("series needs at least " + std::to_string(min_len) + " values");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidInputError("series contains a non-finite value");
    }
  }
}

}  // namespace

double mse(std::span<const double> predictions, std::span<const double> targets) {
  check_pair(predictions, targets, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    acc += r * r;
  }
  return acc / static_cast<double>(predictions.size());
}

double pcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("zero-variance series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 2);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pcc(rx, ry);
}

double top_k_accuracy(const std::vector<std::vector<std::string>>& rankings,
                      const std::vector<std::string>& truth, std::size_t k) {
  if (k < 1) throw InvalidInputError("k must be at least 1");
  if (rankings.size() != truth.size()) throw InvalidInputError("rankings and truth differ in size");
  if (truth.empty()) throw InvalidInputError("no items to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& r = rankings[i];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    if (std::find(r.begin(), end, truth[i]) != end) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::string format_result_row(const ResultRow& row) {
  std::ostringstream out;
  out.precision(8);
  auto field = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  out << row.model << ',' << row.label_metric << ',' << row.split;
  field(row.mse);
  field(row.pcc);
  field(row.srcc);
  field(row.top1);
  field(row.top3);
  return out.str();
}

}  // namespace sqalab
