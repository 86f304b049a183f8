#include "vadcal/theory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "vadcal/metrics.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace vadcal::theory {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("normal_quantile needs p in (0, 1), got " + std::to_string(p));
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double upper_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1), got " + std::to_string(alpha));
  return -normal_quantile(alpha);
}

double truncated_mean(double alpha) { return normal_pdf(upper_quantile(alpha)) / alpha; }

namespace {

// Integrates a tail expectation over [q, upper], split at the logistic peak
// when it falls inside.
double tail_integral(const std::function<double(double)>& f, double q, double peak) {
  const double upper = std::max(q + 12.0, 9.0);
  if (std::isfinite(peak) && peak > q && peak < upper) return integrate(f, q, peak) + integrate(f, peak, upper);
  return integrate(f, q, upper);
}

double peak_location(double t, double mu_proj, LinkFunction link) {
  if (link.kind() != LinkKind::Logistic || t == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return -mu_proj / t;
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  if (b < a) return -integrate(f, b, a);
  using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;
  const auto pieces = static_cast<int>(std::ceil((b - a) / 0.5));
  const double width = (b - a) / pieces;
  double total = 0.0;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * width;
    total += Rule::integrate(f, lo, i + 1 == pieces ? b : lo + width, 0);
  }
  return total;
}

double h_prime(double t, double mu_proj, double alpha, LinkFunction link) {
  if (!std::isfinite(t) || !std::isfinite(mu_proj)) throw InputError("h_prime: non-finite argument");
  const double q = upper_quantile(alpha);
  auto f = [&](double z) { return link.phi_derivative(mu_proj + t * z) * z * normal_pdf(z); };
  return tail_integral(f, q, peak_location(t, mu_proj, link)) / alpha;
}

double h_value(double t, double mu_proj, double alpha, LinkFunction link) {
  if (!std::isfinite(t) || !std::isfinite(mu_proj)) throw InputError("h_value: non-finite argument");
  const double q = upper_quantile(alpha);
  auto f = [&](double z) { return link.phi(mu_proj + t * z) * normal_pdf(z); };
  return tail_integral(f, q, peak_location(t, mu_proj, link)) / alpha;
}

void BiasSetting::validate() const {
  const auto d = beta_hat.size();
  if (d == 0 || beta_star.size() != d || mu.size() != d || static_cast<Eigen::Index>(sigma.dim()) != d) {
    throw InputError("bias setting: beta_hat, beta_star, mu and sigma must share one dimension");
  }
  if (!(alpha > 0.0 && alpha <= 0.5)) throw InputError("bias setting: alpha must lie in (0, 0.5]");
  if (!(projected_variance() > 0.0)) throw InputError("bias setting: beta_hat' Sigma beta_hat must be positive");
}

double BiasSetting::projected_variance() const { return beta_hat.dot(sigma.matrix() * beta_hat); }
double BiasSetting::cross_term() const { return beta_hat.dot(sigma.matrix() * beta_star); }
double BiasSetting::mu_proj() const { return beta_hat.dot(mu); }

double corollary_bias(const BiasSetting& s, double lambda) {
  s.validate();
  const double sd = std::sqrt(s.projected_variance());
  const double lower = s.cross_term() / sd;
  const double upper = lambda * sd;
  const double m = s.mu_proj();
  return integrate([&](double t) { return h_prime(t, m, s.alpha, s.link); }, lower, upper);
}

double bias_leading_term(const BiasSetting& s) { return corollary_bias(s, 1.0); }

double corollary_root(const BiasSetting& s, double tol) {
  auto g = [&](double lambda) { return corollary_bias(s, lambda); };
  double lo = 0.0, hi = 1.0;
  double g_lo = g(lo), g_hi = g(hi);
  for (int i = 0; i < 60 && g_lo > 0.0; ++i) {
    lo = lo - (hi - lo);
    g_lo = g(lo);
  }
  for (int i = 0; i < 60 && g_hi < 0.0; ++i) {
    hi = hi + (hi - lo);
    g_hi = g(hi);
  }
  if (g_lo > 0.0 || g_hi < 0.0) throw DegenerateError("corollary_root: could not bracket a sign change");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double v = g(mid);
    if (v == 0.0) return mid;
    (v < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

// Mean phi(beta_hat' x) - mean phi(beta_star' x) over the top alpha by beta_hat' x.
double gap_on_sample(const BiasSetting& s, const VectorXd& scores, const VectorXd& truth) {
  const auto set = metrics::select_top_alpha(
      std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), s.alpha);
  double est = 0.0, act = 0.0;
  for (std::size_t i : set.indices) {
    est += s.link.phi(scores[static_cast<Eigen::Index>(i)]);
    act += s.link.phi(truth[static_cast<Eigen::Index>(i)]);
  }
  return (est - act) / static_cast<double>(set.indices.size());
}

double selection_gap(const BiasSetting& s, std::size_t n_items, Rng& rng) {
  const MatrixXd X = data::sample_features(s.mu, s.sigma, n_items, rng);
  return gap_on_sample(s, X * s.beta_hat, X * s.beta_star);
}

McEstimate summarize(const std::vector<double>& xs) {
  McEstimate e;
  e.reps = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  e.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - e.mean) * (x - e.mean);
    e.std_err = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return e;
}

}  // namespace

McEstimate mc_selection_bias(const BiasSetting& s, std::size_t n_items, std::size_t n_reps, Rng& rng) {
  s.validate();
  if (n_items < 100) throw InputError("mc_selection_bias needs at least 100 items per rep");
  if (n_reps < 2) throw InputError("mc_selection_bias needs at least 2 reps");
  std::vector<double> gaps(n_reps);
  for (std::size_t r = 0; r < n_reps; ++r) {
    Rng child = rng.child(r);
    gaps[r] = selection_gap(s, n_items, child);
  }
  return summarize(gaps);
}

std::vector<ConsistencyReport> check_bias_consistency(const ConsistencyConfig& cfg, Rng& rng) {
  cfg.train.validate();
  if (cfg.n_refits < 2) throw InputError("check_bias_consistency needs at least 2 refits");
  if (cfg.alphas.empty()) throw InputError("check_bias_consistency needs at least one alpha");
  if (cfg.n_items < 100) throw InputError("check_bias_consistency needs at least 100 items per refit");
  const std::size_t A = cfg.alphas.size();
  std::vector<std::vector<double>> diffs(A, std::vector<double>(cfg.n_refits));
  auto leading = diffs, mc = diffs;
  for (std::size_t r = 0; r < cfg.n_refits; ++r) {
    Rng child = rng.child(r);
    Rng data_rng = child.child(0);
    Rng mc_rng = child.child(1);
    const auto train = data::generate_synthetic(cfg.train, data_rng);
    const auto model = lm::fit_logistic(train);
    const MatrixXd X = data::sample_features(cfg.eval_mu, cfg.eval_sigma, cfg.n_items, mc_rng);
    const VectorXd scores = X * model.beta;
    const VectorXd truth = X * cfg.train.beta_star;
    for (std::size_t a = 0; a < A; ++a) {
      BiasSetting s{model.beta, cfg.train.beta_star, cfg.eval_mu, cfg.eval_sigma, cfg.alphas[a], cfg.link};
      leading[a][r] = bias_leading_term(s);
      mc[a][r] = gap_on_sample(s, scores, truth);
      diffs[a][r] = mc[a][r] - leading[a][r];
    }
  }
  std::vector<ConsistencyReport> out(A);
  for (std::size_t a = 0; a < A; ++a) {
    ConsistencyReport& rep = out[a];
    rep.alpha = cfg.alphas[a];
    rep.refits = cfg.n_refits;
    rep.mean_leading = summarize(leading[a]).mean;
    rep.mean_mc = summarize(mc[a]).mean;
    const McEstimate d = summarize(diffs[a]);
    rep.mean_diff = d.mean;
    rep.se_diff = d.std_err;
    rep.tolerance = 3.0 * d.std_err + 2.0 / static_cast<double>(cfg.train.n);
    rep.pass = std::abs(rep.mean_diff) <= rep.tolerance;
  }
  return out;
}

DecompositionReport check_decomposition(const DecompositionConfig& cfg, Rng& rng) {
  cfg.train.validate();
  const std::size_t K = cfg.n_refits;
  if (K < 2) throw InputError("check_decomposition needs at least 2 refits");
  if (cfg.grid < 2) throw InputError("check_decomposition needs a grid of at least 2 points");
  const auto d = cfg.train.beta_star.size();
  if (cfg.eval_mu.size() != d || static_cast<Eigen::Index>(cfg.eval_sigma.dim()) != d) {
    throw InputError("check_decomposition: evaluation distribution has the wrong dimension");
  }
  const MatrixXd& Sigma = cfg.eval_sigma.matrix();
  const VectorXd& bs = cfg.train.beta_star;

  MatrixXd B(static_cast<Eigen::Index>(K), d);
  for (std::size_t r = 0; r < K; ++r) {
    Rng child = rng.child(r);
    if (cfg.estimator == DecompositionEstimator::Logistic) {
      const auto train = data::generate_synthetic(cfg.train, child);
      B.row(static_cast<Eigen::Index>(r)) = lm::fit_logistic(train).beta.transpose();
    } else {
      const double scale = cfg.noise / std::sqrt(static_cast<double>(cfg.train.n));
      for (Eigen::Index j = 0; j < d; ++j) B(static_cast<Eigen::Index>(r), j) = bs[j] + scale * child.normal();
    }
  }

  Rng grid_rng = rng.child(K);
  const MatrixXd G = data::sample_features(cfg.eval_mu, cfg.eval_sigma, cfg.grid, grid_rng).rowwise() -
                     cfg.eval_mu.transpose();
  const MatrixXd sigma_x = G.transpose() * G / static_cast<double>(cfg.grid);
  const VectorXd mean_beta = B.colwise().mean().transpose();
  const double unbias = static_cast<double>(K) / static_cast<double>(K - 1);

  std::vector<double> lhs(K), cross(K), rhs(K), cond(K);
  for (std::size_t r = 0; r < K; ++r) {
    const VectorXd b = B.row(static_cast<Eigen::Index>(r)).transpose();
    const VectorXd c = b - mean_beta;
    lhs[r] = b.dot(Sigma * b);
    cross[r] = b.dot(Sigma * bs);
    cond[r] = unbias * c.dot(sigma_x * c);
    rhs[r] = cross[r] + cond[r];
  }

  DecompositionReport rep;
  rep.refits = K;
  const McEstimate l = summarize(lhs), x = summarize(cross), v = summarize(cond), rr = summarize(rhs);
  rep.lhs = l.mean;
  rep.lhs_se = l.std_err;
  rep.cross = x.mean;
  rep.cross_se = x.std_err;
  rep.conditional_variance = v.mean;
  rep.rhs = rr.mean;
  rep.rhs_se = rr.std_err;
  rep.combined_se = std::sqrt(l.std_err * l.std_err + rr.std_err * rr.std_err);
  const double floor = 1e-12 * (1.0 + std::abs(rep.lhs));
  rep.pass = std::abs(rep.lhs - rep.rhs) <= 3.0 * rep.combined_se + floor;
  if (cfg.estimator == DecompositionEstimator::GaussianPerturbation) {
    rep.analytic = bs.dot(Sigma * bs) + Sigma.trace() * cfg.noise * cfg.noise / static_cast<double>(cfg.train.n);
    rep.pass = rep.pass && std::abs(rep.rhs - *rep.analytic) <= 3.0 * rep.rhs_se + floor &&
               std::abs(rep.lhs - *rep.analytic) <= 3.0 * rep.lhs_se + floor;
  }
  return rep;
}

namespace {

double min_derivative(LinkFunction link, double lo, double hi) {
  double m = std::min(link.phi_derivative(lo), link.phi_derivative(hi));
  constexpr int kSteps = 1000;
  for (int i = 1; i < kSteps; ++i) m = std::min(m, link.phi_derivative(lo + (hi - lo) * i / kSteps));
  return m;
}

void check_bounds_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.2)) {
    throw InputError("h' bounds require alpha in (0, 0.2], got " + std::to_string(alpha));
  }
}

}  // namespace

BoundConfig derive_bound_config(LinkFunction link, double alpha, double t_l, double t_r, double mu_l, double mu_r) {
  check_bounds_alpha(alpha);
  const double q = upper_quantile(alpha);
  BoundConfig cfg;
  cfg.t_l = t_l;
  cfg.t_r = t_r;
  cfg.mu_l = mu_l;
  cfg.mu_r = mu_r;
  cfg.c1 = 1.0;
  cfg.C = link.phi_derivative_bound();
  const double lo = mu_l + t_l * q, hi = mu_r + 2.0 * t_r * q;
  cfg.c0 = lo <= hi ? min_derivative(link, lo, hi) : 0.0;
  return cfg;
}

BoundReport check_hprime_bounds(const BoundConfig& cfg, double alpha, LinkFunction link, std::size_t grid_points) {
  check_bounds_alpha(alpha);
  if (grid_points < 2) throw InputError("h' bound grid needs at least 2 points");
  BoundReport rep;
  rep.q = upper_quantile(alpha);
  rep.truncated_mean = truncated_mean(alpha);
  auto& v = rep.hypothesis_violations;
  if (!(cfg.t_l < cfg.t_r)) v.push_back("t_l must be below t_r");
  if (cfg.t_l < 0.0) v.push_back("t_l must be non-negative");
  if (!(cfg.mu_l <= cfg.mu_r)) v.push_back("mu_l must not exceed mu_r");
  if (!(cfg.c0 > 0.0)) v.push_back("c0 must be positive");
  if (!(cfg.c0 <= cfg.C)) v.push_back("c0 must not exceed C");
  if (!(cfg.c1 > 0.0 && cfg.c1 <= 1.0)) v.push_back("c1 must lie in (0, 1]");
  if (cfg.C < link.phi_derivative_bound()) v.push_back("C is below the supremum of phi'");
  const double lo = cfg.mu_l + cfg.t_l * rep.q, hi = cfg.mu_r + 2.0 * cfg.t_r * rep.q;
  if (!(lo <= hi)) {
    v.push_back("window [mu_l + t_l q, mu_r + 2 t_r q] is empty");
  } else if (min_derivative(link, lo, hi) < cfg.c0 * (1.0 - 1e-12)) {
    v.push_back("phi' falls below c0 inside the window");
  }

  rep.lower = 0.5 * cfg.c0 * cfg.c1 * rep.truncated_mean;
  rep.upper = cfg.C * rep.truncated_mean;
  rep.lower_holds = true;
  rep.upper_holds = true;
  const std::array<double, 3> mus{cfg.mu_l, 0.5 * (cfg.mu_l + cfg.mu_r), cfg.mu_r};
  for (double mu : mus) {
    for (std::size_t i = 0; i < grid_points; ++i) {
      const double t = cfg.t_l + (cfg.t_r - cfg.t_l) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
      const double h = h_prime(t, mu, alpha, link);
      rep.points.push_back({mu, t, h});
      if (h < rep.lower - 1e-10) rep.lower_holds = false;
      if (h > rep.upper + 1e-10) rep.upper_holds = false;
    }
  }
  return rep;
}

nlohmann::json to_json(const McEstimate& e) {
  return {{"mean", e.mean}, {"std_err", e.std_err}, {"reps", e.reps}};
}

nlohmann::json to_json(const ConsistencyReport& r) {
  return {{"alpha", r.alpha},          {"mean_leading_term", r.mean_leading}, {"mean_mc_bias", r.mean_mc},
          {"mean_diff", r.mean_diff},  {"se_diff", r.se_diff},                {"tolerance", r.tolerance},
          {"refits", r.refits},        {"pass", r.pass}};
}

nlohmann::json to_json(const DecompositionReport& r) {
  nlohmann::json j{{"lhs", r.lhs},
                   {"lhs_se", r.lhs_se},
                   {"cross", r.cross},
                   {"cross_se", r.cross_se},
                   {"conditional_variance", r.conditional_variance},
                   {"rhs", r.rhs},
                   {"rhs_se", r.rhs_se},
                   {"combined_se", r.combined_se},
                   {"refits", r.refits},
                   {"pass", r.pass}};
  j["analytic"] = r.analytic ? nlohmann::json(*r.analytic) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const BoundReport& r) {
  double min_h = std::numeric_limits<double>::infinity(), max_h = -min_h;
  for (const auto& p : r.points) {
    min_h = std::min(min_h, p.h);
    max_h = std::max(max_h, p.h);
  }
  return {{"q", r.q},
          {"truncated_mean", r.truncated_mean},
          {"lower_bound", r.lower},
          {"upper_bound", r.upper},
          {"min_h_prime", min_h},
          {"max_h_prime", max_h},
          {"grid_points", r.points.size()},
          {"lower_holds", r.lower_holds},
          {"upper_holds", r.upper_holds},
          {"hypothesis_violations", r.hypothesis_violations},
          {"pass", r.pass()}};
}

}  // namespace vadcal::theory
