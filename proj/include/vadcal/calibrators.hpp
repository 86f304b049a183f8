#pragma once

// Baseline post-hoc calibrators fit on a labeled validation set: Platt
// scaling, equal-frequency histogram binning, isotonic regression (PAVA) and
// the scaling-binning calibrator.

#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace vadcal::calib {

inline constexpr std::size_t kDefaultBins = 50;

struct PlattCalibrator {
  double a = 1.0;  // slope on the logit
  double b = 0.0;  // offset

  double apply_one(double logit) const;
  std::vector<double> apply(std::span<const double> logits) const;
};

// Newton on the cross-entropy of sigmoid(a l + b) against Platt's smoothed
// targets (N+ + 1)/(N+ + 2) and 1/(N- + 2). Constant logits give a = 0.
PlattCalibrator fit_platt(std::span<const double> logits, std::span<const double> labels);

struct HistogramCalibrator {
  std::vector<double> edges;   // B + 1 non-decreasing values over score space
  std::vector<double> values;  // B per-bin outputs

  std::size_t bin_of(double score) const;
  std::vector<double> apply(std::span<const double> scores) const;
};

// Equal-frequency bins (stable score order); per-bin empirical positive rate.
HistogramCalibrator fit_histogram(std::span<const double> scores, std::span<const double> labels,
                                  std::size_t bins = kDefaultBins);

struct IsotonicCalibrator {
  std::vector<double> breakpoints;  // ascending distinct scores
  std::vector<double> values;       // non-decreasing fitted values

  double apply_one(double score) const;
  std::vector<double> apply(std::span<const double> scores) const;
};

// Weighted pool-adjacent-violators on score-sorted labels; tied scores are
// pooled first. Minimizes squared error over non-decreasing step functions.
IsotonicCalibrator fit_isotonic(std::span<const double> scores, std::span<const double> labels);

struct ScalingBinningCalibrator {
  PlattCalibrator platt;
  std::vector<double> edges;   // over Platt outputs
  std::vector<double> values;  // mean Platt output per bin

  std::vector<double> apply(std::span<const double> logits) const;
};

// Platt fit, equal-frequency bins over its outputs, bin means of those outputs.
ScalingBinningCalibrator fit_scaling_binning(std::span<const double> logits, std::span<const double> labels,
                                             std::size_t bins = kDefaultBins);

using Calibrator = std::variant<PlattCalibrator, HistogramCalibrator, IsotonicCalibrator, ScalingBinningCalibrator>;

std::string_view kind_name(const Calibrator& c);

// Outputs are clamped Probabilities. Platt and scaling-binning expect logits;
// histogram and isotonic accept any monotone score.
std::vector<double> apply(const Calibrator& c, std::span<const double> scores);

nlohmann::json to_json(const Calibrator& c);
Calibrator calibrator_from_json(const nlohmann::json& j);

}  // namespace vadcal::calib
