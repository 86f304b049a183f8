#pragma once

// Ridge-stabilized maximum-likelihood logistic regression and S-member
// scorer ensembles built by bootstrapping or reseeding.

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <vector>

#include "vadcal/core.hpp"
#include "vadcal/dataset.hpp"

namespace vadcal::lm {

struct FitOptions {
  int max_iter = 100;
  double tol = 1e-8;
  double ridge = 1e-8;
  bool fit_intercept = false;
  // Starting point for Newton; zeros when unset. Must have length d.
  std::optional<Eigen::VectorXd> initial_beta;
};

struct LinearModel {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  bool fit_intercept = false;
  bool converged = false;
  int iterations = 0;

  // intercept + X beta. Throws InputError on a dimension mismatch.
  Eigen::VectorXd score(const Eigen::MatrixXd& X) const;
  // phi(score) pointwise, clamped into the Probability range.
  std::vector<double> predict(const Eigen::MatrixXd& X, LinkFunction link = LinkFunction::logistic()) const;
};

// Per-iteration record of the penalized log-likelihood, for monotonicity checks.
struct FitTrace {
  std::vector<double> objective;
};

// Newton (IRLS) with step halving on
//   sum_i [y_i log p_i + (1 - y_i) log(1 - p_i)] - ridge * |beta|^2
// (intercept unpenalized). Stops when max |delta| < tol.
LinearModel fit_logistic(const data::LabeledDataset& data, const FitOptions& opts = {},
                         FitTrace* trace = nullptr);

double penalized_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& beta, double intercept, double ridge);
// Gradient with respect to beta (and the intercept last, when present).
Eigen::VectorXd penalized_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& beta, double intercept, double ridge,
                                   bool with_intercept);

// n rows drawn uniformly with replacement.
data::LabeledDataset bootstrap_resample(const data::LabeledDataset& data, Rng& rng);

enum class EnsembleMode { Bootstrap, Reseed };
EnsembleMode ensemble_mode_from_name(std::string_view name);
std::string_view ensemble_mode_name(EnsembleMode mode);

struct ScorerEnsemble {
  std::vector<LinearModel> members;
  LinkFunction link;
  EnsembleMode mode = EnsembleMode::Bootstrap;

  std::size_t size() const noexcept { return members.size(); }
  // n x S matrix of member logits.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& X) const;
};

// Member 1 is the full-data fit. Members 2..S are fit on bootstrap resamples
// (Bootstrap) or on a reshuffled copy of the data from a random start
// (Reseed). For convex logistic MLE, Reseed converges back to member 1.
ScorerEnsemble build_ensemble(const data::LabeledDataset& data, std::size_t S, EnsembleMode mode,
                              const FitOptions& base, Rng& rng);

struct ModelMeta {
  std::uint64_t seed = 0;
  EnsembleMode mode = EnsembleMode::Bootstrap;
};

nlohmann::json model_to_json(const LinearModel& model, LinkFunction link, const ModelMeta& meta);
LinearModel model_from_json(const nlohmann::json& j, LinkFunction* link = nullptr, ModelMeta* meta = nullptr);

}  // namespace vadcal::lm
