#include "vadcal/vad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vadcal::vad {

using Eigen::Index;

VarianceEstimator variance_estimator_from_name(std::string_view name) {
  if (name == "exchangeable") return VarianceEstimator::Exchangeable;
  if (name == "anchored") return VarianceEstimator::Anchored;
  throw ConfigError("unknown variance estimator '" + std::string(name) + "' (expected exchangeable|anchored)");
}

std::string_view variance_estimator_name(VarianceEstimator v) {
  return v == VarianceEstimator::Exchangeable ? "exchangeable" : "anchored";
}

VadParams compute_lambda(const Eigen::MatrixXd& columns, LinkFunction link, VarianceEstimator estimator) {
  const Index n = columns.rows();
  const Index S = columns.cols();
  if (S < 2) throw InputError("compute_lambda needs at least 2 ensemble columns, got " + std::to_string(S));
  if (n < 2) throw InputError("compute_lambda needs at least 2 rows, got " + std::to_string(n));
  if (!columns.allFinite()) throw InputError("compute_lambda: non-finite score");

  VadParams params;
  params.link = link;
  const Eigen::RowVectorXd means = columns.colwise().mean();
  params.diag.column_means.assign(means.data(), means.data() + S);
  params.y_bar = means[0];

  const Eigen::VectorXd c1 = columns.col(0).array() - means[0];
  params.diag.sigma_yhat_sq = c1.squaredNorm() / static_cast<double>(n);
  if (!(params.diag.sigma_yhat_sq > 0.0)) {
    throw DegenerateError("compute_lambda: member 1 is constant on the reference set");
  }

  const Eigen::MatrixXd d = columns.rowwise() - means;
  double total = 0.0;
  if (estimator == VarianceEstimator::Exchangeable) {
    const Eigen::VectorXd row_mean = d.rowwise().mean();
    total = (d.colwise() - row_mean).squaredNorm();
  } else {
    total = (d.rightCols(S - 1).colwise() - d.col(0)).squaredNorm();
  }
  params.diag.sigma_f_sq = total / static_cast<double>(S - 1) / static_cast<double>(n);
  params.diag.raw_lambda = 1.0 - params.diag.sigma_f_sq / params.diag.sigma_yhat_sq;
  params.lambda = std::clamp(params.diag.raw_lambda, 0.0, 1.0);
  return params;
}

double vad_transform_one(double member1, const VadParams& params) {
  return phi_eval(params.link, params.lambda * member1 + (1.0 - params.lambda) * params.y_bar);
}

std::vector<double> vad_transform(std::span<const double> member1, const VadParams& params) {
  std::vector<double> out(member1.size());
  for (std::size_t i = 0; i < member1.size(); ++i) out[i] = vad_transform_one(member1[i], params);
  return out;
}

VadPlusRatio vad_plus_lambda(const VadParams& val_test, const VadParams& val_train) {
  if (!(val_train.lambda > 0.0)) {
    throw DegenerateError("VAD+: lambda on val-train is 0, so the baseline calibration cannot be adjusted");
  }
  VadPlusRatio r;
  r.raw_ratio = val_test.lambda / val_train.lambda;
  r.ratio = std::clamp(r.raw_ratio, 0.0, 1.0);
  return r;
}

VadPlusParams fit_vad_plus(const VadPlusRatio& ratio, std::span<const double> calibrated_val_test, LinkFunction link) {
  if (calibrated_val_test.empty()) throw InputError("VAD+: empty val-test predictions");
  const std::vector<double> logits = inverse_link(link, calibrated_val_test);
  double sum = 0.0;
  for (double l : logits) sum += l;
  return VadPlusParams{ratio, sum / static_cast<double>(logits.size()), link};
}

std::vector<double> vad_plus_transform(std::span<const double> calibrated, const VadPlusParams& params) {
  const double r = params.ratio.ratio;
  std::vector<double> out = inverse_link(params.link, calibrated);
  for (double& l : out) l = phi_eval(params.link, r * l + (1.0 - r) * params.center);
  return out;
}

nlohmann::json to_json(const VadParams& params) {
  return {{"lambda", params.lambda},
          {"raw_lambda", params.diag.raw_lambda},
          {"y_bar", params.y_bar},
          {"sigma_f_sq", params.diag.sigma_f_sq},
          {"sigma_yhat_sq", params.diag.sigma_yhat_sq},
          {"link", std::string(params.link.name())}};
}

VadParams vad_params_from_json(const nlohmann::json& j) {
  try {
    VadParams p;
    p.lambda = j.at("lambda").get<double>();
    p.diag.raw_lambda = j.at("raw_lambda").get<double>();
    p.y_bar = j.at("y_bar").get<double>();
    p.diag.sigma_f_sq = j.at("sigma_f_sq").get<double>();
    p.diag.sigma_yhat_sq = j.at("sigma_yhat_sq").get<double>();
    p.link = link_from_name(j.at("link").get<std::string>());
    if (!(p.lambda >= 0.0 && p.lambda <= 1.0)) throw DataError("vad params: lambda outside [0, 1]");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("vad params json: ") + e.what());
  }
}

}  // namespace vadcal::vad
