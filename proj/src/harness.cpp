#include "vadcal/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace vadcal::harness {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

enum Stream : std::uint64_t { kData = 0, kEnsemble = 1, kSplit = 2, kShift = 3 };

// Member logits on the three evaluation sets plus the labels we may use.
struct ScoreSets {
  MatrixXd val_train;
  VectorXd val_train_y;
  MatrixXd val_test;
  MatrixXd test;
  VectorXd test_y;
};

struct Preloaded {
  std::optional<data::LabeledDataset> csv;
  std::optional<ScoreSets> scores;
};

Preloaded preload(const ExperimentConfig& cfg) {
  Preloaded p;
  if (cfg.source == SourceKind::Csv) p.csv = data::load_csv(cfg.csv.path);
  if (cfg.source == SourceKind::Scores) {
    const auto vtr = data::load_scores_csv(cfg.scores.val_train);
    const auto vt = data::load_scores_csv(cfg.scores.val_test);
    const auto te = data::load_scores_csv(cfg.scores.test);
    if (vtr.members() != vt.members() || vt.members() != te.members()) {
      throw DataError("score files disagree on the number of ensemble columns");
    }
    if (vt.members() < 2) throw DataError("score files need at least 2 ensemble columns for VAD");
    p.scores = ScoreSets{vtr.logits, vtr.labels, vt.logits, te.logits, te.labels};
  }
  return p;
}

std::span<const double> as_span(const VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

lm::FitOptions fit_options(const ExperimentConfig& cfg) {
  lm::FitOptions o;
  o.fit_intercept = cfg.fit_intercept;
  o.ridge = cfg.ridge;
  return o;
}

ScoreSets ensemble_scores(const ExperimentConfig& cfg, const data::LabeledDataset& train,
                          const data::LabeledDataset& val_train, const MatrixXd& val_test_X,
                          const data::LabeledDataset& test, Rng& rng) {
  const auto ensemble = lm::build_ensemble(train, cfg.ensemble_size, cfg.ensemble_mode, fit_options(cfg), rng);
  return ScoreSets{ensemble.logits(val_train.features), val_train.labels, ensemble.logits(val_test_X),
                   ensemble.logits(test.features), test.labels};
}

ScoreSets synthetic_scores(const ExperimentConfig& cfg, Rng& rng) {
  const SyntheticSource& s = cfg.synthetic;
  const auto sigma = data::Covariance::isotropic(s.dim, s.variance);
  Rng data_rng = rng.child(kData);
  const data::GaussianConfig train_cfg{s.mu_train, sigma, s.beta_star, s.n_train};
  const data::GaussianConfig val_train_cfg{s.mu_test, sigma, s.beta_star, s.n_val_train};
  const data::GaussianConfig test_cfg{s.mu_test, sigma, s.beta_star, s.n_test};
  const auto train = data::generate_synthetic(train_cfg, data_rng);
  const auto test = data::generate_synthetic(test_cfg, data_rng);
  const MatrixXd val_test_X = data::sample_features(s.mu_test, sigma, s.n_val_test, data_rng);
  const auto val_train = data::generate_synthetic(val_train_cfg, data_rng);
  Rng ens_rng = rng.child(kEnsemble);
  return ensemble_scores(cfg, train, val_train, val_test_X, test, ens_rng);
}

ScoreSets csv_scores(const ExperimentConfig& cfg, const data::LabeledDataset& all, Rng& rng) {
  Rng split_rng = rng.child(kSplit);
  auto parts = data::split(all, cfg.csv.split, split_rng);
  if (cfg.csv.shift != ShiftKind::None) {
    // An auxiliary model fit on train scores each row; rows are kept with a
    // probability decreasing in that score.
    lm::FitOptions aux_opts = fit_options(cfg);
    aux_opts.fit_intercept = true;
    const auto aux = lm::fit_logistic(parts.train, aux_opts);
    const auto keep = cfg.csv.shift == ShiftKind::OneMinusP ? data::keep_one_minus_p()
                                                            : data::keep_piecewise(cfg.csv.shift_a, cfg.csv.shift_b);
    Rng shift_rng = rng.child(kShift);
    for (auto* part : {&parts.val_test, &parts.test}) {
      const auto p = aux.predict(part->features);
      auto shifted = data::rejection_shift(*part, keep, p, shift_rng);
      if (shifted.data.empty()) throw DataError("covariate shift removed every row");
      *part = std::move(shifted.data);
    }
  }
  Rng ens_rng = rng.child(kEnsemble);
  return ensemble_scores(cfg, parts.train, parts.val_train, parts.val_test.features, parts.test, ens_rng);
}

std::vector<double> column(const MatrixXd& m, Eigen::Index j) {
  return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
}

MatrixXd map_columns(const MatrixXd& m, const std::function<std::vector<double>(std::span<const double>)>& f) {
  MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const auto c = f(column(m, j));
    out.col(j) = Eigen::Map<const VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  }
  return out;
}

std::optional<calib::Calibrator> fit_baseline(BaseMethod base, const std::vector<double>& logits,
                                              std::span<const double> labels, std::size_t bins) {
  switch (base) {
    case BaseMethod::Platt: return calib::fit_platt(logits, labels);
    case BaseMethod::Histogram: return calib::fit_histogram(logits, labels, bins);
    case BaseMethod::ScalingBinning: return calib::fit_scaling_binning(logits, labels, bins);
    case BaseMethod::Isotonic: return calib::fit_isotonic(logits, labels);
    default: return std::nullopt;
  }
}

ReplicationOutcome evaluate_scores(const ExperimentConfig& cfg, const ScoreSets& s) {
  const LinkFunction logistic = LinkFunction::logistic();
  const auto estimator = cfg.variance_estimator();
  ReplicationOutcome out;

  const auto test_l1 = column(s.test, 0);
  const auto val_train_l1 = column(s.val_train, 0);
  const auto val_test_l1 = column(s.val_test, 0);
  const auto labels = as_span(s.test_y);
  const auto vanilla = apply_link(logistic, test_l1);

  const vad::VadParams params = vad::compute_lambda(s.val_test, logistic, estimator);
  out.lambda = params.lambda;
  out.raw_lambda = params.diag.raw_lambda;
  std::optional<vad::VadParams> val_train_params;

  std::vector<std::vector<double>> preds;
  for (const MethodSpec& m : cfg.methods) {
    std::vector<double> p;
    if (m.base == BaseMethod::Vad) {
      p = vad::vad_transform(test_l1, params);
    } else if (m.base == BaseMethod::VadP) {
      const MatrixXd probs = map_columns(s.val_test, [&](auto c) { return apply_link(logistic, c); });
      const auto pp = vad::compute_lambda(probs, LinkFunction::identity(), estimator);
      out.lambda_p = pp.lambda;
      p = vad::vad_transform(vanilla, pp);
    } else {
      const auto cal = fit_baseline(m.base, val_train_l1, as_span(s.val_train_y), cfg.calibrator_bins);
      auto calibrate = [&](std::span<const double> logits) {
        return cal ? calib::apply(*cal, logits) : apply_link(logistic, logits);
      };
      p = calibrate(test_l1);
      if (m.mode == MethodMode::VadPlus) {
        vad::VadPlusRatio ratio;
        if (cfg.vad_plus_calibrated_lambda) {
          auto to_logits = [&](std::span<const double> c) { return inverse_link(logistic, calibrate(c)); };
          const auto vt = vad::compute_lambda(map_columns(s.val_test, to_logits), logistic, estimator);
          const auto vtr = vad::compute_lambda(map_columns(s.val_train, to_logits), logistic, estimator);
          ratio = vad::vad_plus_lambda(vt, vtr);
        } else {
          if (!val_train_params) val_train_params = vad::compute_lambda(s.val_train, logistic, estimator);
          ratio = vad::vad_plus_lambda(params, *val_train_params);
        }
        out.vad_plus_ratio = ratio.ratio;
        const auto plus = vad::fit_vad_plus(ratio, calibrate(val_test_l1), logistic);
        p = vad::vad_plus_transform(p, plus);
      }
    }
    preds.push_back(std::move(p));
  }

  out.values.assign(cfg.methods.size(),
                    std::vector<std::vector<std::optional<double>>>(
                        cfg.alphas.size(), std::vector<std::optional<double>>(metric_names().size())));
  for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
    const auto base_set = metrics::select_top_alpha(vanilla, cfg.alphas[a]);
    const auto base_report = metrics::evaluate(metrics::gather(vanilla, base_set.indices),
                                               metrics::gather(labels, base_set.indices), cfg.metric_bins,
                                               cfg.metric_binning);
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      const auto set = metrics::select_top_alpha(preds[m], cfg.alphas[a]);
      if (cfg.methods[m].base == BaseMethod::Vad && params.lambda > 0.0 && set.indices != base_set.indices) {
        out.selection_consistent = false;
      }
      const auto report = metrics::evaluate(metrics::gather(preds[m], set.indices),
                                            metrics::gather(labels, set.indices), cfg.metric_bins,
                                            cfg.metric_binning);
      auto& v = out.values[m][a];
      v[0] = report.calibration_error;
      v[1] = report.ece;
      v[2] = report.mce;
      v[3] = report.log_loss;
      v[4] = metrics::log_loss_reduction(report, base_report);
    }
  }
  out.ok = true;
  return out;
}

ReplicationOutcome replicate(const ExperimentConfig& cfg, const Preloaded& pre, std::size_t r) {
  try {
    Rng rng = Rng(cfg.seed).child(r);
    switch (cfg.source) {
      case SourceKind::Synthetic: return evaluate_scores(cfg, synthetic_scores(cfg, rng));
      case SourceKind::Csv: return evaluate_scores(cfg, csv_scores(cfg, *pre.csv, rng));
      case SourceKind::Scores: return evaluate_scores(cfg, *pre.scores);
    }
  } catch (const Error& e) {
    ReplicationOutcome failed;
    failed.error = e.what();
    return failed;
  }
  return {};
}

double std_err(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace

ReplicationOutcome run_replication(const ExperimentConfig& cfg, std::size_t r) {
  cfg.validate();
  return replicate(cfg, preload(cfg), r);
}

ReportTable aggregate(const ExperimentConfig& cfg, const std::vector<ReplicationOutcome>& outcomes) {
  ReportTable table;
  const auto& names = metric_names();
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
      for (std::size_t k = 0; k < names.size(); ++k) {
        std::vector<double> xs;
        for (const auto& o : outcomes) {
          if (o.ok && o.values[m][a][k]) xs.push_back(*o.values[m][a][k]);
        }
        ReportRow row;
        row.method = method_base_name(cfg.methods[m].base);
        row.mode = method_mode_name(cfg.methods[m].mode);
        row.alpha = cfg.alphas[a];
        row.metric = names[k];
        row.reps = xs.size();
        double sum = 0.0;
        for (double x : xs) sum += x;
        row.mean = xs.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(xs.size());
        row.std_err = std_err(xs, row.mean);
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Preloaded pre = preload(cfg);
  const std::size_t R = cfg.replications;
  ExperimentResult result;
  result.outcomes.resize(R);

  std::size_t threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = std::min(threads, R);
  if (threads <= 1) {
    for (std::size_t r = 0; r < R; ++r) result.outcomes[r] = replicate(cfg, pre, r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < R; r = next++) result.outcomes[r] = replicate(cfg, pre, r);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (std::size_t r = 0; r < R; ++r) {
    if (!result.outcomes[r].ok) {
      ++result.failed;
      warn("replication " + std::to_string(r) + " failed: " + result.outcomes[r].error);
    }
  }
  if (static_cast<double>(result.failed) > 0.1 * static_cast<double>(R)) {
    throw DataError(std::to_string(result.failed) + " of " + std::to_string(R) +
                    " replications failed (more than 10%); first error: " +
                    std::find_if(result.outcomes.begin(), result.outcomes.end(), [](const auto& o) {
                      return !o.ok;
                    })->error);
  }
  result.table = aggregate(cfg, result.outcomes);
  return result;
}

const ReportRow* ReportTable::find(std::string_view method, std::string_view mode, double alpha,
                                   std::string_view metric) const {
  for (const auto& row : rows) {
    if (row.method == method && row.mode == mode && std::abs(row.alpha - alpha) < 1e-12 && row.metric == metric) {
      return &row;
    }
  }
  return nullptr;
}

nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::vector<double> lambdas, lambdas_p, ratios;
  bool consistent = true;
  for (const auto& o : result.outcomes) {
    if (!o.ok) continue;
    lambdas.push_back(o.lambda);
    if (o.lambda_p) lambdas_p.push_back(*o.lambda_p);
    if (o.vad_plus_ratio) ratios.push_back(*o.vad_plus_ratio);
    consistent = consistent && o.selection_consistent;
  }
  auto stats = [](const std::vector<double>& xs) -> nlohmann::json {
    if (xs.empty()) return nullptr;
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    const double se = std_err(xs, mean);
    return {{"mean", mean}, {"std_err", std::isnan(se) ? nlohmann::json(nullptr) : nlohmann::json(se)},
            {"reps", xs.size()}};
  };
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t r = 0; r < result.outcomes.size(); ++r) {
    if (!result.outcomes[r].ok) failures.push_back({{"replication", r}, {"error", result.outcomes[r].error}});
  }
  return {{"config", to_json(cfg)},
          {"variance_estimator", std::string(vad::variance_estimator_name(cfg.variance_estimator()))},
          {"replications", result.outcomes.size()},
          {"failed", result.failed},
          {"failures", failures},
          {"lambda", stats(lambdas)},
          {"lambda_p", stats(lambdas_p)},
          {"vad_plus_ratio", stats(ratios)},
          {"selection_consistent", consistent}};
}

}  // namespace vadcal::harness
