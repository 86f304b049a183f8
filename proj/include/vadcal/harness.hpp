#pragma once

// Experiment orchestration: data, ensemble, calibrators, VAD and VAD+,
// top-alpha metrics, seeded replications and report emission.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vadcal/calibrators.hpp"
#include "vadcal/dataset.hpp"
#include "vadcal/linear_model.hpp"
#include "vadcal/metrics.hpp"
#include "vadcal/vad.hpp"

namespace vadcal::harness {

inline constexpr int kSchemaVersion = 1;

enum class SourceKind { Synthetic, Csv, Scores };

struct SyntheticSource {
  std::size_t dim = 20;
  Eigen::VectorXd beta_star;  // defaults to all ones
  Eigen::VectorXd mu_train;   // defaults to 0.05
  Eigen::VectorXd mu_test;    // defaults to -0.05
  double variance = 0.01;     // isotropic feature variance
  std::size_t n_train = 3000;
  std::size_t n_val_train = 30000;
  std::size_t n_val_test = 30000;
  std::size_t n_test = 30000;
};

enum class ShiftKind { None, OneMinusP, Piecewise };

struct CsvSource {
  std::filesystem::path path;
  data::SplitSpec split;
  ShiftKind shift = ShiftKind::None;
  double shift_a = 0.2;
  double shift_b = 0.3;
};

struct ScoresSource {
  std::filesystem::path val_train;
  std::filesystem::path val_test;  // labels ignored
  std::filesystem::path test;
};

enum class BaseMethod { Vanilla, Vad, VadP, Platt, Histogram, ScalingBinning, Isotonic };
enum class MethodMode { Original, VadPlus };

struct MethodSpec {
  BaseMethod base = BaseMethod::Vanilla;
  MethodMode mode = MethodMode::Original;
};

// "vanilla", "vad", "vad_p", "platt", "histogram", "scaling_binning",
// "isotonic", each optionally suffixed "+vad_plus" (not for vad / vad_p).
MethodSpec method_from_name(std::string_view name);
std::string method_base_name(BaseMethod m);
std::string method_mode_name(MethodMode m);

enum class VarianceChoice { Auto, Exchangeable, Anchored };

struct ExperimentConfig {
  SourceKind source = SourceKind::Synthetic;
  SyntheticSource synthetic;
  CsvSource csv;
  ScoresSource scores;

  std::size_t ensemble_size = 2;
  lm::EnsembleMode ensemble_mode = lm::EnsembleMode::Bootstrap;
  VarianceChoice variance = VarianceChoice::Auto;
  bool fit_intercept = true;
  double ridge = 1e-8;

  std::vector<MethodSpec> methods;
  std::vector<double> alphas;
  std::size_t metric_bins = 10;
  metrics::BinScheme metric_binning = metrics::BinScheme::EqualMass;
  std::size_t calibrator_bins = calib::kDefaultBins;
  // VAD+ lambdas from raw logits (default) or from calibrated logits.
  bool vad_plus_calibrated_lambda = false;

  std::size_t replications = 100;
  std::uint64_t seed = 20240101;
  std::size_t threads = 1;

  void validate() const;
  vad::VarianceEstimator variance_estimator() const;
};

// Defaults for each source; fields missing from the JSON keep these.
ExperimentConfig default_config(SourceKind source);
// Unknown keys and type mismatches raise ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"calibration_error", "ece", "mce", "log_loss", "log_loss_reduction"};
  return names;
}

struct ReportRow {
  std::string method;
  std::string mode;
  double alpha = 0.0;
  std::string metric;
  double mean = 0.0;
  double std_err = 0.0;  // sample std / sqrt(reps); NaN with a single rep
  std::size_t reps = 0;
};

struct ReportTable {
  std::vector<ReportRow> rows;

  const ReportRow* find(std::string_view method, std::string_view mode, double alpha, std::string_view metric) const;
};

struct ReplicationOutcome {
  bool ok = false;
  std::string error;
  double lambda = 0.0;
  double raw_lambda = 0.0;
  std::optional<double> lambda_p;
  std::optional<double> vad_plus_ratio;
  // Vanilla and VAD picked identical top-alpha sets at every alpha.
  bool selection_consistent = true;
  // values[method][alpha][metric], unset when undefined on that rep.
  std::vector<std::vector<std::vector<std::optional<double>>>> values;
};

struct ExperimentResult {
  ReportTable table;
  std::vector<ReplicationOutcome> outcomes;
  std::size_t failed = 0;
};

// Runs all replications. More than 10% failed replications raises DataError.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// One replication with its own seed; exposed for tests.
ReplicationOutcome run_replication(const ExperimentConfig& cfg, std::size_t r);

ReportTable aggregate(const ExperimentConfig& cfg, const std::vector<ReplicationOutcome>& outcomes);

enum class ReportFormat { Csv, Markdown };
ReportFormat report_format_from_name(std::string_view name);

void emit_csv(const ReportTable& table, std::ostream& out);
void emit_markdown(const ReportTable& table, std::ostream& out);
void emit(const ReportTable& table, ReportFormat format, const std::filesystem::path& path);
ReportTable parse_csv_report(std::istream& in);

// "8.55%±0.68%" style for calibration error and log-loss reduction.
std::string format_percent(double mean, double se);

nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentResult& result);

// Theory checks driven from a JSON config. Every section is optional in the
// config; defaults reproduce the synthetic setting.
struct TheoryCheckConfig {
  std::uint64_t seed = 7;
  SyntheticSource synthetic;
  std::vector<double> alphas{0.02, 0.1};
  std::size_t consistency_refits = 100;
  std::size_t consistency_items = 100000;
  std::size_t random_settings = 20;
  std::size_t random_max_dim = 5;
  std::size_t random_refits = 100;
  std::size_t random_items = 20000;
  std::size_t random_n_train = 3000;
  std::size_t decomposition_refits = 500;
  std::size_t decomposition_grid = 2000;
  std::vector<double> bound_alphas{0.05, 0.1, 0.2};
  double bound_t_l = 0.1;
  double bound_t_r = 0.5;
  double bound_mu_l = -1.0;
  double bound_mu_r = 1.0;
  std::size_t bound_grid = 50;
  bool inject_beta_star = false;
};

TheoryCheckConfig theory_config_from_json(const nlohmann::json& j);
// Report with a top-level "pass" flag.
nlohmann::json run_theory_check(const TheoryCheckConfig& cfg);

}  // namespace vadcal::harness
