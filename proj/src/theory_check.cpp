#include <cmath>

#include "vadcal/harness.hpp"
#include "vadcal/theory.hpp"

namespace vadcal::harness {

using nlohmann::json;

namespace {

data::GaussianConfig train_config(const SyntheticSource& s, std::size_t n) {
  return {s.mu_train, data::Covariance::isotropic(s.dim, s.variance), s.beta_star, n};
}

struct RandomSetting {
  data::GaussianConfig train;
  Eigen::VectorXd eval_mu;
  data::Covariance eval_sigma;
  double alpha;
};

RandomSetting draw_setting(Rng& g, std::size_t max_dim, std::size_t n_train) {
  static constexpr double kAlphas[] = {0.02, 0.05, 0.1, 0.2};
  const auto d = static_cast<Eigen::Index>(1 + g.index(max_dim));
  Eigen::VectorXd beta(d), mu(d), var(d), eval_mu(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    beta[j] = (2.0 * g.uniform() - 1.0) * 1.5;
    mu[j] = g.uniform() - 0.5;
    var[j] = 0.1 + 0.9 * g.uniform();
    eval_mu[j] = mu[j] + 0.6 * g.uniform() - 0.3;
  }
  const auto sigma = data::Covariance::diagonal(var);
  return {{mu, sigma, beta, n_train}, eval_mu, sigma, kAlphas[g.index(4)]};
}

}  // namespace

json run_theory_check(const TheoryCheckConfig& cfg) {
  namespace th = theory;
  const SyntheticSource& s = cfg.synthetic;
  const auto sigma = data::Covariance::isotropic(s.dim, s.variance);
  const LinkFunction logistic = LinkFunction::logistic();
  Rng root(cfg.seed);
  bool pass = true;
  json report;

  json tm = json::array();
  for (double a : cfg.alphas) {
    tm.push_back({{"alpha", a}, {"quantile", th::upper_quantile(a)}, {"truncated_mean", th::truncated_mean(a)}});
  }
  report["truncated_mean"] = tm;

  {
    th::ConsistencyConfig c{train_config(s, s.n_train), s.mu_test, sigma, cfg.alphas, cfg.consistency_refits,
                            cfg.consistency_items, logistic};
    Rng rng = root.child(1);
    json rows = json::array();
    for (const auto& r : th::check_bias_consistency(c, rng)) {
      rows.push_back(th::to_json(r));
      pass = pass && r.pass;
    }
    report["consistency"] = rows;
  }

  {
    json rows = json::array();
    bool all = true;
    for (std::size_t k = 0; k < cfg.random_settings; ++k) {
      Rng g = root.child(2).child(k);
      Rng draw = g.child(0);
      const RandomSetting rs = draw_setting(draw, cfg.random_max_dim, cfg.random_n_train);
      th::ConsistencyConfig c{rs.train, rs.eval_mu, rs.eval_sigma, {rs.alpha}, cfg.random_refits, cfg.random_items,
                              logistic};
      Rng rng = g.child(1);
      const auto r = th::check_bias_consistency(c, rng).front();
      json row = th::to_json(r);
      row["dim"] = rs.train.beta_star.size();
      rows.push_back(row);
      all = all && r.pass;
    }
    report["random_settings"] = {{"settings", rows}, {"pass", all}};
    pass = pass && all;
  }

  {
    th::DecompositionConfig d;
    d.train = train_config(s, s.n_train);
    d.eval_mu = s.mu_test;
    d.eval_sigma = sigma;
    d.n_refits = cfg.decomposition_refits;
    d.grid = cfg.decomposition_grid;
    Rng r1 = root.child(3);
    const auto logistic_rep = th::check_decomposition(d, r1);
    d.estimator = th::DecompositionEstimator::GaussianPerturbation;
    d.noise = 1.0;
    Rng r2 = root.child(4);
    const auto analytic_rep = th::check_decomposition(d, r2);
    d.noise = 0.0;
    Rng r3 = root.child(5);
    const auto zero_rep = th::check_decomposition(d, r3);
    report["decomposition"] = {{"logistic", th::to_json(logistic_rep)},
                               {"gaussian_perturbation", th::to_json(analytic_rep)},
                               {"zero_noise", th::to_json(zero_rep)}};
    pass = pass && logistic_rep.pass && analytic_rep.pass && zero_rep.pass;
  }

  {
    Rng rng = root.child(6);
    const auto train = data::generate_synthetic(train_config(s, s.n_train), rng);
    const auto model = lm::fit_logistic(train);
    json rows = json::array();
    for (double a : cfg.alphas) {
      th::BiasSetting bs{model.beta, s.beta_star, s.mu_test, sigma, a, logistic};
      const double found = th::corollary_root(bs);
      const double target = bs.cross_term() / bs.projected_variance();
      const bool ok = std::abs(found - target) <= 1e-6;
      rows.push_back({{"alpha", a},
                      {"root", found},
                      {"target", target},
                      {"abs_error", std::abs(found - target)},
                      {"leading_term", th::bias_leading_term(bs)},
                      {"pass", ok}});
      pass = pass && ok;
    }
    report["corollary_root"] = rows;
  }

  {
    json rows = json::array();
    for (double a : cfg.bound_alphas) {
      const auto bc =
          th::derive_bound_config(logistic, a, cfg.bound_t_l, cfg.bound_t_r, cfg.bound_mu_l, cfg.bound_mu_r);
      const auto br = th::check_hprime_bounds(bc, a, logistic, cfg.bound_grid);
      json row = th::to_json(br);
      row["alpha"] = a;
      row["c0"] = bc.c0;
      row["C"] = bc.C;
      row["c1"] = bc.c1;
      rows.push_back(row);
      pass = pass && br.pass();
    }
    report["hprime_bounds"] = rows;
  }

  if (cfg.inject_beta_star) {
    json rows = json::array();
    Rng rng = root.child(7);
    for (double a : cfg.alphas) {
      th::BiasSetting bs{s.beta_star, s.beta_star, s.mu_test, sigma, a, logistic};
      const double lead = th::bias_leading_term(bs);
      const auto mc = th::mc_selection_bias(bs, cfg.consistency_items, 20, rng);
      const bool ok = std::abs(lead) <= 1e-12 && std::abs(mc.mean - lead) <= 3.0 * mc.std_err + 1e-12;
      rows.push_back({{"alpha", a}, {"leading_term", lead}, {"mc", th::to_json(mc)}, {"pass", ok}});
      pass = pass && ok;
    }
    report["injected_beta_star"] = rows;
  }

  report["pass"] = pass;
  return report;
}

}  // namespace vadcal::harness
