#pragma once

// Numerical checks of the maximization-bias formula for top-alpha selection
// under Gaussian features: truncated-normal helpers, quadrature of h'(t),
// the leading bias term, a Monte-Carlo selection-bias oracle, the variance
// decomposition behind lambda, and bounds on h'(t).

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadcal/core.hpp"
#include "vadcal/dataset.hpp"
#include "vadcal/linear_model.hpp"

namespace vadcal::theory {

double normal_pdf(double x);
double normal_cdf(double x);
// Inverse standard-normal CDF. p must lie strictly inside (0, 1).
double normal_quantile(double p);
// q_{1-alpha}, computed without cancellation for small alpha.
double upper_quantile(double alpha);
// E[Z | Z >= q_{1-alpha}] = pdf(q) / alpha.
double truncated_mean(double alpha);

// Composite 61-point Gauss-Kronrod over pieces at most 0.5 wide; b < a gives
// the negated integral. Meant for smooth integrands.
double integrate(const std::function<double(double)>& f, double a, double b);

// h'(t) = E[phi'(mu_proj + t Z) Z | Z >= q_{1-alpha}].
double h_prime(double t, double mu_proj, double alpha, LinkFunction link);
// h(t) = E[phi(mu_proj + t Z) | Z >= q_{1-alpha}], an antiderivative of h'.
double h_value(double t, double mu_proj, double alpha, LinkFunction link);

struct BiasSetting {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd beta_star;
  Eigen::VectorXd mu;
  data::Covariance sigma;
  double alpha = 0.1;
  LinkFunction link;

  // Throws InputError on mismatched dimensions, alpha outside (0, 0.5] or a
  // zero projected variance.
  void validate() const;
  double projected_variance() const;  // beta_hat' Sigma beta_hat
  double cross_term() const;          // beta_hat' Sigma beta_star
  double mu_proj() const;             // beta_hat' mu
};

// Integral of h' from cross/sqrt(var) to sqrt(var), signed.
double bias_leading_term(const BiasSetting& s);
// Same with the upper limit lambda sqrt(var).
double corollary_bias(const BiasSetting& s, double lambda);
// Zero of corollary_bias in lambda by bisection (expected at cross/var).
double corollary_root(const BiasSetting& s, double tol = 1e-12);

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t reps = 0;
};

// Per rep: n_items draws X ~ N(mu, Sigma), top alpha by beta_hat' x, and the
// gap mean phi(beta_hat' x) - mean phi(beta_star' x) on that set.
McEstimate mc_selection_bias(const BiasSetting& s, std::size_t n_items, std::size_t n_reps, Rng& rng);

// Refit-averaged comparison: each refit draws a fresh training set, fits
// beta_hat (no intercept), evaluates the leading term and one Monte-Carlo
// selection gap on the evaluation distribution, and records the difference.
// One evaluation sample per refit is shared by all alphas.
struct ConsistencyConfig {
  data::GaussianConfig train;
  Eigen::VectorXd eval_mu;
  data::Covariance eval_sigma;
  std::vector<double> alphas{0.1};
  std::size_t n_refits = 100;
  std::size_t n_items = 100000;
  LinkFunction link;
};

struct ConsistencyReport {
  double alpha = 0.0;
  double mean_leading = 0.0;
  double mean_mc = 0.0;
  double mean_diff = 0.0;
  double se_diff = 0.0;
  double tolerance = 0.0;  // 3 se + 2 / N_train
  std::size_t refits = 0;
  bool pass = false;
};

std::vector<ConsistencyReport> check_bias_consistency(const ConsistencyConfig& cfg, Rng& rng);

enum class DecompositionEstimator {
  Logistic,              // beta_hat from a logistic fit on fresh data
  GaussianPerturbation,  // beta_hat = beta_star + N(0, noise^2 / N I)
};

struct DecompositionConfig {
  data::GaussianConfig train;
  Eigen::VectorXd eval_mu;
  data::Covariance eval_sigma;
  std::size_t n_refits = 500;
  std::size_t grid = 2000;  // X grid for the conditional variance
  DecompositionEstimator estimator = DecompositionEstimator::Logistic;
  double noise = 1.0;
};

struct DecompositionReport {
  double lhs = 0.0;  // E[beta_hat' Sigma beta_hat]
  double lhs_se = 0.0;
  double cross = 0.0;  // E[beta_hat' Sigma beta_star]
  double cross_se = 0.0;
  double conditional_variance = 0.0;  // E_X Var(beta_hat'(X - mu) | X)
  double rhs = 0.0;
  double rhs_se = 0.0;
  double combined_se = 0.0;
  std::optional<double> analytic;  // GaussianPerturbation only
  std::size_t refits = 0;
  bool pass = false;
};

DecompositionReport check_decomposition(const DecompositionConfig& cfg, Rng& rng);

struct BoundConfig {
  double c0 = 0.0;
  double C = 0.0;
  double c1 = 1.0;
  double t_l = 0.0;
  double t_r = 0.0;
  double mu_l = 0.0;
  double mu_r = 0.0;
};

// Fills c0 with the minimum of phi' over [mu_l + t_l q, mu_r + 2 t_r q] and
// C with the supremum of phi' over the real line.
BoundConfig derive_bound_config(LinkFunction link, double alpha, double t_l, double t_r, double mu_l,
                                double mu_r);

struct BoundPoint {
  double mu = 0.0;
  double t = 0.0;
  double h = 0.0;
};

struct BoundReport {
  double q = 0.0;
  double truncated_mean = 0.0;
  double lower = 0.0;  // c0 c1 / 2 E[Z | Z >= q]
  double upper = 0.0;  // C E[Z | Z >= q]
  std::vector<BoundPoint> points;
  bool lower_holds = false;
  bool upper_holds = false;
  std::vector<std::string> hypothesis_violations;
  bool pass() const { return hypothesis_violations.empty() && lower_holds && upper_holds; }
};

// Evaluates h' on a grid of t in [t_l, t_r] at mu in {mu_l, mid, mu_r}.
// alpha > 0.2 is an InputError.
BoundReport check_hprime_bounds(const BoundConfig& cfg, double alpha, LinkFunction link,
                                std::size_t grid_points = 50);

nlohmann::json to_json(const McEstimate& e);
nlohmann::json to_json(const ConsistencyReport& r);
nlohmann::json to_json(const DecompositionReport& r);
nlohmann::json to_json(const BoundReport& r);

}  // namespace vadcal::theory
