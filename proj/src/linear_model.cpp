#include "vadcal/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vadcal::lm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Log-likelihood of logits eta against labels y.
double log_likelihood(const VectorXd& eta, const VectorXd& y) {
  double total = 0.0;
  for (Index i = 0; i < eta.size(); ++i) total += y[i] * eta[i] - softplus(eta[i]);
  return total;
}

void check_features(const MatrixXd& X, const VectorXd& beta) {
  if (X.cols() != beta.size()) {
    throw InputError("feature dimension " + std::to_string(X.cols()) + " does not match model dimension " +
                     std::to_string(beta.size()));
  }
}

}  // namespace

VectorXd LinearModel::score(const MatrixXd& X) const {
  check_features(X, beta);
  VectorXd eta = X * beta;
  eta.array() += intercept;
  return eta;
}

std::vector<double> LinearModel::predict(const MatrixXd& X, LinkFunction link) const {
  const VectorXd eta = score(X);
  return apply_link(link, std::span<const double>(eta.data(), static_cast<std::size_t>(eta.size())));
}

double penalized_log_likelihood(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, double intercept,
                                double ridge) {
  check_features(X, beta);
  VectorXd eta = X * beta;
  eta.array() += intercept;
  return log_likelihood(eta, y) - ridge * beta.squaredNorm();
}

VectorXd penalized_gradient(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, double intercept,
                            double ridge, bool with_intercept) {
  check_features(X, beta);
  VectorXd eta = X * beta;
  eta.array() += intercept;
  VectorXd resid(eta.size());
  const LinkFunction logistic = LinkFunction::logistic();
  for (Index i = 0; i < eta.size(); ++i) resid[i] = y[i] - logistic.phi(eta[i]);
  VectorXd g(beta.size() + (with_intercept ? 1 : 0));
  g.head(beta.size()) = X.transpose() * resid - 2.0 * ridge * beta;
  if (with_intercept) g[beta.size()] = resid.sum();
  return g;
}

LinearModel fit_logistic(const data::LabeledDataset& data, const FitOptions& opts, FitTrace* trace) {
  data.validate();
  if (opts.max_iter < 1 || !(opts.tol > 0.0) || !(opts.ridge >= 0.0)) {
    throw ConfigError("fit options: need max_iter >= 1, tol > 0, ridge >= 0");
  }
  const double positives = data.labels.sum();
  if (positives == 0.0 || positives == static_cast<double>(data.rows())) {
    throw DegenerateError("logistic fit needs both classes in the labels");
  }

  const MatrixXd& X = data.features;
  const VectorXd& y = data.labels;
  const Index d = X.cols();
  const Index k = d + (opts.fit_intercept ? 1 : 0);
  const LinkFunction logistic = LinkFunction::logistic();

  VectorXd theta = VectorXd::Zero(k);
  if (opts.initial_beta) {
    if (opts.initial_beta->size() != d) throw InputError("initial_beta has the wrong dimension");
    theta.head(d) = *opts.initial_beta;
  }
  auto intercept_of = [&](const VectorXd& t) { return opts.fit_intercept ? t[d] : 0.0; };
  auto objective = [&](const VectorXd& t) {
    return penalized_log_likelihood(X, y, t.head(d), intercept_of(t), opts.ridge);
  };

  double current = objective(theta);
  if (trace) trace->objective = {current};

  LinearModel model;
  model.fit_intercept = opts.fit_intercept;
  MatrixXd H(k, k);
  VectorXd g(k);
  VectorXd eta(X.rows());
  VectorXd w(X.rows());
  VectorXd resid(X.rows());

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    eta = X * theta.head(d);
    eta.array() += intercept_of(theta);
    for (Index i = 0; i < eta.size(); ++i) {
      const double p = logistic.phi(eta[i]);
      resid[i] = y[i] - p;
      w[i] = p * (1.0 - p);
    }
    g.head(d) = X.transpose() * resid - 2.0 * opts.ridge * theta.head(d);
    H.topLeftCorner(d, d) = X.transpose() * w.asDiagonal() * X;
    H.topLeftCorner(d, d).diagonal().array() += 2.0 * opts.ridge;
    if (opts.fit_intercept) {
      g[d] = resid.sum();
      const VectorXd xw = X.transpose() * w;
      H.block(0, d, d, 1) = xw;
      H.block(d, 0, 1, d) = xw.transpose();
      H(d, d) = w.sum();
    }

    Eigen::LDLT<MatrixXd> ldlt(H);
    VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      step = g;  // gradient ascent fallback on a singular Hessian
    }

    // Step halving keeps the objective non-decreasing.
    double scale = 1.0;
    VectorXd candidate = theta + step;
    double value = objective(candidate);
    while (!(value >= current) && scale > 1e-10) {
      scale *= 0.5;
      candidate = theta + scale * step;
      value = objective(candidate);
    }
    if (!(value >= current)) {
      // No ascent direction at machine precision: treat as converged.
      model.converged = true;
      model.iterations = iter;
      break;
    }
    const double max_delta = (scale * step).cwiseAbs().maxCoeff();
    theta = candidate;
    current = value;
    if (trace) trace->objective.push_back(current);
    model.iterations = iter;
    if (max_delta < opts.tol) {
      model.converged = true;
      break;
    }
  }

  model.beta = theta.head(d);
  model.intercept = intercept_of(theta);
  if (!model.converged) {
    warn("logistic fit did not converge in " + std::to_string(opts.max_iter) + " iterations");
  }
  return model;
}

data::LabeledDataset bootstrap_resample(const data::LabeledDataset& data, Rng& rng) {
  const std::size_t n = data.rows();
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(n);
  return data.subset(idx);
}

EnsembleMode ensemble_mode_from_name(std::string_view name) {
  if (name == "bootstrap") return EnsembleMode::Bootstrap;
  if (name == "reseed") return EnsembleMode::Reseed;
  throw ConfigError("unknown ensemble mode '" + std::string(name) + "' (expected bootstrap|reseed)");
}

std::string_view ensemble_mode_name(EnsembleMode mode) {
  return mode == EnsembleMode::Bootstrap ? "bootstrap" : "reseed";
}

MatrixXd ScorerEnsemble::logits(const MatrixXd& X) const {
  MatrixXd out(X.rows(), static_cast<Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) out.col(static_cast<Index>(j)) = members[j].score(X);
  return out;
}

ScorerEnsemble build_ensemble(const data::LabeledDataset& data, std::size_t S, EnsembleMode mode,
                              const FitOptions& base, Rng& rng) {
  if (S < 2) throw InputError("ensemble size must be at least 2, got " + std::to_string(S));
  ScorerEnsemble ensemble;
  ensemble.link = LinkFunction::logistic();
  ensemble.mode = mode;
  ensemble.members.reserve(S);
  ensemble.members.push_back(fit_logistic(data, base));
  for (std::size_t j = 1; j < S; ++j) {
    if (mode == EnsembleMode::Bootstrap) {
      ensemble.members.push_back(fit_logistic(bootstrap_resample(data, rng), base));
    } else {
      const auto order = random_permutation(data.rows(), rng);
      FitOptions opts = base;
      Eigen::VectorXd start(static_cast<Index>(data.dims()));
      for (Index i = 0; i < start.size(); ++i) start[i] = 0.1 * rng.normal();
      opts.initial_beta = start;
      ensemble.members.push_back(fit_logistic(data.subset(order), opts));
    }
  }
  return ensemble;
}

nlohmann::json model_to_json(const LinearModel& model, LinkFunction link, const ModelMeta& meta) {
  return nlohmann::json{
      {"beta", std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size())},
      {"intercept", model.intercept},
      {"link", std::string(link.name())},
      {"meta",
       {{"seed", meta.seed},
        {"mode", std::string(ensemble_mode_name(meta.mode))},
        {"fit_intercept", model.fit_intercept},
        {"converged", model.converged},
        {"iterations", model.iterations}}},
  };
}

LinearModel model_from_json(const nlohmann::json& j, LinkFunction* link, ModelMeta* meta) {
  try {
    const auto beta = j.at("beta").get<std::vector<double>>();
    LinearModel model;
    model.beta = Eigen::Map<const VectorXd>(beta.data(), static_cast<Index>(beta.size()));
    model.intercept = j.at("intercept").get<double>();
    if (link) *link = link_from_name(j.at("link").get<std::string>());
    const auto& m = j.at("meta");
    model.fit_intercept = m.value("fit_intercept", model.intercept != 0.0);
    model.converged = m.value("converged", true);
    model.iterations = m.value("iterations", 0);
    if (meta) {
      meta->seed = m.at("seed").get<std::uint64_t>();
      meta->mode = ensemble_mode_from_name(m.at("mode").get<std::string>());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model json: ") + e.what());
  }
}

}  // namespace vadcal::lm
