#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vadcal/calibrators.hpp"
#include "vadcal/dataset.hpp"
#include "vadcal/harness.hpp"
#include "vadcal/vad.hpp"

namespace fs = std::filesystem;
using namespace vadcal;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckFailed = 3;

struct RunFlags {
  std::string config;
  std::string out = ".";
  std::string format = "csv";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::size_t> threads;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--format", f.format, "report format: csv|markdown")->capture_default_str();
  cmd->add_option("--seed", f.seed, "base seed (overrides config)");
  cmd->add_option("--reps", f.reps, "replications (overrides config)");
  cmd->add_option("--threads", f.threads, "worker threads, 0 = all cores (overrides config)");
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int run_experiment_command(const RunFlags& f, harness::SourceKind expected) {
  harness::ExperimentConfig cfg =
      f.config.empty() ? harness::default_config(expected) : harness::load_config(f.config);
  if (cfg.source != expected) throw ConfigError("field 'source' does not match this subcommand");
  if (f.seed) cfg.seed = *f.seed;
  if (f.reps) cfg.replications = *f.reps;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  const auto format = harness::report_format_from_name(f.format);

  const auto result = harness::run_experiment(cfg);
  fs::create_directories(f.out);
  const fs::path report = fs::path(f.out) / (format == harness::ReportFormat::Csv ? "report.csv" : "report.md");
  harness::emit(result.table, format, report);
  write_json(harness::summary_json(cfg, result), fs::path(f.out) / "summary.json");
  std::cout << "wrote " << report.string() << " (" << result.table.rows.size() << " rows, " << result.failed
            << " failed replications)\n";
  return 0;
}

int run_theory_command(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
                       bool inject) {
  harness::TheoryCheckConfig cfg;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot open config file " + config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + config + " is not valid JSON: " + e.what());
    }
    cfg = harness::theory_config_from_json(j);
  } else {
    cfg = harness::theory_config_from_json(nlohmann::json{{"schema_version", harness::kSchemaVersion}});
  }
  if (seed) cfg.seed = *seed;
  if (inject) cfg.inject_beta_star = true;
  const auto report = harness::run_theory_check(cfg);
  fs::create_directories(out);
  const fs::path path = fs::path(out) / "theory_check.json";
  write_json(report, path);
  const bool pass = report.at("pass").get<bool>();
  std::cout << "wrote " << path.string() << " (" << (pass ? "all checks pass" : "CHECK FAILED") << ")\n";
  return pass ? 0 : kExitCheckFailed;
}

int run_calibrate_command(const std::string& method, const std::string& scores_path, const std::string& out,
                          std::size_t bins, const std::string& variance, const std::string& link_name) {
  const auto scores = data::load_scores_csv(scores_path);
  nlohmann::json j;
  if (method == "vad") {
    const auto link = link_from_name(link_name);
    Eigen::MatrixXd columns = scores.logits;
    if (link.kind() == LinkKind::Identity) {
      for (Eigen::Index i = 0; i < columns.size(); ++i) columns.data()[i] = phi_eval(LinkFunction::logistic(), columns.data()[i]);
    }
    j = vad::to_json(vad::compute_lambda(columns, link, vad::variance_estimator_from_name(variance)));
  } else {
    const std::vector<double> l1(scores.logits.col(0).data(), scores.logits.col(0).data() + scores.rows());
    const std::vector<double> y(scores.labels.data(), scores.labels.data() + scores.labels.size());
    calib::Calibrator c;
    if (method == "platt") c = calib::fit_platt(l1, y);
    else if (method == "histogram") c = calib::fit_histogram(l1, y, bins);
    else if (method == "isotonic") c = calib::fit_isotonic(l1, y);
    else if (method == "scaling_binning") c = calib::fit_scaling_binning(l1, y, bins);
    else throw ConfigError("unknown calibrator '" + method + "' (expected platt|histogram|isotonic|scaling_binning|vad)");
    j = calib::to_json(c);
  }
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection-aware calibration toolkit"};
  app.require_subcommand(1);

  RunFlags synth, pipeline, scores;
  add_run_flags(app.add_subcommand("synth", "synthetic Gaussian experiment"), synth, false);
  add_run_flags(app.add_subcommand("pipeline", "experiment on a labeled feature CSV"), pipeline, true);
  add_run_flags(app.add_subcommand("scores", "metrics and VAD on externally produced score files"), scores, true);

  auto* theory = app.add_subcommand("theory-check", "numerical checks of the selection-bias formula");
  std::string theory_config, theory_out = ".";
  std::optional<std::uint64_t> theory_seed;
  bool inject = false;
  theory->add_option("--config", theory_config, "theory-check config (JSON)");
  theory->add_option("--out", theory_out, "output directory")->capture_default_str();
  theory->add_option("--seed", theory_seed, "seed (overrides config)");
  theory->add_flag("--inject-beta-star", inject, "also check the exact case beta_hat = beta_star");

  auto* calibrate = app.add_subcommand("calibrate", "fit a calibrator or VAD parameters from a score file");
  std::string method, scores_path, cal_out, variance = "exchangeable", link = "logistic";
  std::size_t bins = calib::kDefaultBins;
  calibrate->add_option("--method", method, "platt|histogram|isotonic|scaling_binning|vad")->required();
  calibrate->add_option("--scores", scores_path, "score CSV (label,l1..lS)")->required();
  calibrate->add_option("--out", cal_out, "output JSON path (stdout when omitted)");
  calibrate->add_option("--bins", bins, "bin count for binning calibrators")->capture_default_str();
  calibrate->add_option("--variance-estimator", variance, "exchangeable|anchored (vad)")->capture_default_str();
  calibrate->add_option("--link", link, "logistic|identity (vad)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand("synth")) return run_experiment_command(synth, harness::SourceKind::Synthetic);
    if (app.got_subcommand("pipeline")) return run_experiment_command(pipeline, harness::SourceKind::Csv);
    if (app.got_subcommand("scores")) return run_experiment_command(scores, harness::SourceKind::Scores);
    if (app.got_subcommand("theory-check")) return run_theory_command(theory_config, theory_out, theory_seed, inject);
    if (app.got_subcommand("calibrate")) return run_calibrate_command(method, scores_path, cal_out, bins, variance, link);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
