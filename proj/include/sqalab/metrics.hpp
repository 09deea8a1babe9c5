#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace sqalab {

double mse(std::span<const double> predictions, std::span<const double> targets);
/// Pearson correlation; zero variance raises DegenerateInputError.
double pcc(std::span<const double> x, std::span<const double> y);
/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);
double srcc(std::span<const double> x, std::span<const double> y);

/// Fraction of items whose true class is among the first k of its ranking.
double top_k_accuracy(const std::vector<std::vector<std::string>>& rankings,
                      const std::vector<std::string>& truth, std::size_t k);

struct ResultRow {
  std::string model;
  std::string label_metric;
  std::string split;
  std::optional<double> mse;
  std::optional<double> pcc;
  std::optional<double> srcc;
  std::optional<double> top1;
  std::optional<double> top3;
};

inline constexpr const char* kResultHeader = "model,label_metric,split,mse,pcc,srcc,top1,top3";

/// CSV row in kResultHeader column order; absent values are left empty.
std::string format_result_row(const ResultRow& row);

}  // namespace sqalab
