#pragma once

// Top-alpha selection and the calibration metrics evaluated on it.

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace vadcal::metrics {

struct SelectionSet {
  std::vector<std::size_t> indices;  // descending prediction, ties by index
  double alpha = 1.0;
};

// Keeps max(1, floor(alpha N)) rows. alpha outside (0, 1] is an InputError.
SelectionSet select_top_alpha(std::span<const double> preds, double alpha);

// Gathers values[indices[k]].
std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> indices);

// sum(preds) / sum(labels) - 1. No positives raises UndefinedMetric.
double calibration_error(std::span<const double> preds, std::span<const double> labels);

// EqualWidth: M bins spanning [min pred, max pred]. EqualMass: M groups of
// (near) equal size after sorting by (pred, label).
enum class BinScheme { EqualWidth, EqualMass };
BinScheme bin_scheme_from_name(std::string_view name);
std::string_view bin_scheme_name(BinScheme scheme);

struct BinDetail {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_pred = 0.0;
  double mean_label = 0.0;
};

struct BinnedErrors {
  double ece = 0.0;
  double mce = 0.0;
  std::vector<BinDetail> bins;  // M entries; empty bins have count 0
};

BinnedErrors binned_errors(std::span<const double> preds, std::span<const double> labels, std::size_t M,
                           BinScheme scheme = BinScheme::EqualWidth);
double ece(std::span<const double> preds, std::span<const double> labels, std::size_t M,
           BinScheme scheme = BinScheme::EqualWidth);
double mce(std::span<const double> preds, std::span<const double> labels, std::size_t M,
           BinScheme scheme = BinScheme::EqualWidth);

// Mean binary cross-entropy; predictions are clamped first.
double log_loss(std::span<const double> preds, std::span<const double> labels);

struct MetricsReport {
  std::optional<double> calibration_error;  // unset when the set has no positives
  double ece = 0.0;
  double mce = 0.0;
  double log_loss = 0.0;
  std::size_t bin_count = 0;
  std::size_t selected = 0;
  std::vector<BinDetail> bins;
};

// LL_method / LL_reference - 1.
double log_loss_reduction(const MetricsReport& method, const MetricsReport& reference);

// Selects the top alpha of preds and computes every metric on that set.
MetricsReport evaluate_top_alpha(std::span<const double> preds, std::span<const double> labels, double alpha,
                                 std::size_t M, BinScheme scheme = BinScheme::EqualWidth);
// All metrics on the rows given.
MetricsReport evaluate(std::span<const double> preds, std::span<const double> labels, std::size_t M,
                       BinScheme scheme = BinScheme::EqualWidth);

}  // namespace vadcal::metrics
