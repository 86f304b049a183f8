#pragma once

// Variance-adjusting debiasing: estimate the shrinkage factor lambda from an
// ensemble's logits on an unlabeled set, then pull member-1 logits toward
// their mean by that factor.

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "json.hpp"
#include "vadcal/core.hpp"

namespace vadcal::vad {

// How the between-member conditional variance is estimated.
//   Exchangeable: sample variance of the centred members around their mean.
//   Anchored: squared spread of members 2..S around member 1, divided by S-1.
//     Appropriate when member 1 is the full-data fit and the rest are
//     bootstrap refits, where Exchangeable understates the variance by (S-1)/S.
enum class VarianceEstimator { Exchangeable, Anchored };
VarianceEstimator variance_estimator_from_name(std::string_view name);
std::string_view variance_estimator_name(VarianceEstimator v);

struct VadDiagnostics {
  double sigma_f_sq = 0.0;
  double sigma_yhat_sq = 0.0;
  double raw_lambda = 1.0;
  std::vector<double> column_means;
};

struct VadParams {
  double lambda = 1.0;  // clamped into [0, 1]
  double y_bar = 0.0;   // mean of column 1 on the reference set
  LinkFunction link;
  VadDiagnostics diag;
};

// columns is n x S, already in link space (logits for the logistic link,
// probabilities for the identity link). Needs S >= 2 and n >= 2.
VadParams compute_lambda(const Eigen::MatrixXd& columns, LinkFunction link,
                         VarianceEstimator estimator = VarianceEstimator::Exchangeable);

// phi(lambda l + (1 - lambda) y_bar), clamped.
std::vector<double> vad_transform(std::span<const double> member1, const VadParams& params);
double vad_transform_one(double member1, const VadParams& params);

struct VadPlusRatio {
  double ratio = 1.0;  // clamped into [0, 1]
  double raw_ratio = 1.0;
};

// lambda_val_test / lambda_val_train. A zero denominator is a DegenerateError.
VadPlusRatio vad_plus_lambda(const VadParams& val_test, const VadParams& val_train);

struct VadPlusParams {
  VadPlusRatio ratio;
  double center = 0.0;  // mean calibrated logit on val-test
  LinkFunction link;
};

// Centre is the mean of phi^-1 of the calibrated val-test predictions.
VadPlusParams fit_vad_plus(const VadPlusRatio& ratio, std::span<const double> calibrated_val_test,
                           LinkFunction link = LinkFunction::logistic());
// phi(r phi^-1(f_cal) + (1 - r) center).
std::vector<double> vad_plus_transform(std::span<const double> calibrated, const VadPlusParams& params);

nlohmann::json to_json(const VadParams& params);
VadParams vad_params_from_json(const nlohmann::json& j);

}  // namespace vadcal::vad
