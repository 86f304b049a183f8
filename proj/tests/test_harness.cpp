#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vadcal/dataset.hpp"
#include "vadcal/harness.hpp"
#include "vadcal/metrics.hpp"

using namespace vadcal;
using namespace vadcal::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vadcal_test_harness";
  fs::create_directories(dir);
  return dir / name;
}

data::ScoredRows make_scores(std::size_t n, std::size_t S, Rng& rng) {
  data::ScoredRows s;
  s.labels.resize(static_cast<Eigen::Index>(n));
  s.logits.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(S));
  for (Eigen::Index i = 0; i < s.logits.rows(); ++i) {
    const double base = rng.normal();
    s.labels[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-0.8 * base))) ? 1.0 : 0.0;
    for (Eigen::Index k = 0; k < s.logits.cols(); ++k) s.logits(i, k) = base + 0.3 * rng.normal();
  }
  return s;
}

ExperimentConfig scores_config(Rng& rng) {
  ExperimentConfig cfg = default_config(SourceKind::Scores);
  const char* names[] = {"val_train.csv", "val_test.csv", "test.csv"};
  fs::path* slots[] = {&cfg.scores.val_train, &cfg.scores.val_test, &cfg.scores.test};
  for (int k = 0; k < 3; ++k) {
    *slots[k] = scratch(names[k]);
    data::write_scores_csv(make_scores(4000, 3, rng), *slots[k]);
  }
  return cfg;
}

ExperimentConfig small_synthetic() {
  ExperimentConfig cfg = default_config(SourceKind::Synthetic);
  cfg.synthetic.n_val_train = cfg.synthetic.n_val_test = cfg.synthetic.n_test = 5000;
  cfg.alphas = {0.05, 0.2};
  return cfg;
}

std::string csv_text(const ReportTable& t) {
  std::ostringstream out;
  emit_csv(t, out);
  return out.str();
}

}  // namespace

TEST_CASE("vanilla at alpha 1 passes through to the metrics") {
  Rng rng(1);
  auto cfg = scores_config(rng);
  cfg.methods = {method_from_name("vanilla")};
  cfg.alphas = {1.0};
  cfg.replications = 1;
  const auto result = run_experiment(cfg);
  const auto test = data::load_scores_csv(cfg.scores.test);
  std::vector<double> p(test.rows()), y(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    p[i] = LinkFunction::logistic().phi(test.logits(Eigen::Index(i), 0));
    y[i] = test.labels[Eigen::Index(i)];
  }
  const auto* row = result.table.find("vanilla", "original", 1.0, "calibration_error");
  REQUIRE(row != nullptr);
  CHECK(row->mean == doctest::Approx(metrics::calibration_error(p, y)).epsilon(1e-12));
  CHECK(row->reps == 1);
  CHECK(std::isnan(row->std_err));
  const auto* ll = result.table.find("vanilla", "original", 1.0, "log_loss");
  REQUIRE(ll != nullptr);
  CHECK(ll->mean == doctest::Approx(metrics::log_loss(p, y)).epsilon(1e-12));
}

TEST_CASE("score files with every method") {
  Rng rng(2);
  auto cfg = scores_config(rng);
  cfg.methods.clear();
  for (const char* m : {"vanilla", "vad", "vad_p", "platt", "histogram", "isotonic", "scaling_binning", "platt+vad_plus",
                        "histogram+vad_plus", "isotonic+vad_plus", "scaling_binning+vad_plus"}) {
    cfg.methods.push_back(method_from_name(m));
  }
  cfg.alphas = {0.02, 0.1};
  const auto result = run_experiment(cfg);
  CHECK(result.failed == 0);
  CHECK(result.table.rows.size() == cfg.methods.size() * 2 * metric_names().size());
  CHECK(result.outcomes.front().selection_consistent);
  CHECK(result.outcomes.front().vad_plus_ratio.has_value());
  CHECK(result.table.find("platt", "vad_plus", 0.1, "ece") != nullptr);
  CHECK(result.table.find("vanilla", "original", 0.1, "log_loss_reduction")->mean == 0.0);
  CHECK_THROWS_AS(method_from_name("vad+vad_plus"), ConfigError);
  CHECK_THROWS_AS(method_from_name("temperature"), ConfigError);
}

TEST_CASE("same seed gives an identical report regardless of threads") {
  auto cfg = small_synthetic();
  cfg.replications = 6;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  cfg.threads = 3;
  const auto c = run_experiment(cfg);
  CHECK(csv_text(a.table) == csv_text(b.table));
  CHECK(csv_text(a.table) == csv_text(c.table));
  cfg.seed += 1;
  CHECK(csv_text(a.table) != csv_text(run_experiment(cfg).table));
}

TEST_CASE("replications are independent and reproducible one at a time") {
  auto cfg = small_synthetic();
  const auto r0 = run_replication(cfg, 0), r0b = run_replication(cfg, 0), r1 = run_replication(cfg, 1);
  REQUIRE(r0.ok);
  CHECK(r0.lambda == r0b.lambda);
  CHECK(r0.lambda != r1.lambda);
  CHECK(r0.lambda >= 0.0);
  CHECK(r0.lambda <= 1.0);
  CHECK(r0.selection_consistent);
}

TEST_CASE("standard errors shrink like one over root R") {
  auto cfg = small_synthetic();
  cfg.methods = {method_from_name("vanilla")};
  cfg.threads = 0;
  cfg.replications = 100;
  const auto big = run_experiment(cfg).table;
  cfg.replications = 25;
  const auto small = run_experiment(cfg).table;
  const double ratio = small.find("vanilla", "original", 0.2, "calibration_error")->std_err /
                       big.find("vanilla", "original", 0.2, "calibration_error")->std_err;
  CHECK(ratio > 2.0 * 0.7);
  CHECK(ratio < 2.0 * 1.3);
}

TEST_CASE("csv pipeline with a covariate shift") {
  Rng rng(3);
  data::GaussianConfig g{Eigen::VectorXd::Zero(4), data::Covariance::isotropic(4, 1.0), Eigen::Vector4d(1.0, -0.5, 0.3, 0.8), 20000};
  const fs::path path = scratch("features.csv");
  data::write_csv(data::generate_synthetic(g, rng), path);
  for (const char* shift : {"none", "one_minus_p", "piecewise"}) {
    const json j = {{"schema_version", 1},
                    {"source", "csv"},
                    {"csv", {{"path", path.string()}, {"shift", shift}}},
                    {"methods", {"vanilla", "vad", "platt", "platt+vad_plus"}},
                    {"alphas", {0.05}},
                    {"replications", 2}};
    const auto cfg = config_from_json(j);
    const auto result = run_experiment(cfg);
    CHECK(result.failed == 0);
    CHECK(result.table.find("platt", "vad_plus", 0.05, "calibration_error") != nullptr);
  }
}

TEST_CASE("config parsing") {
  const auto d = config_from_json(json{{"schema_version", 1}});
  CHECK(d.source == SourceKind::Synthetic);
  CHECK(d.replications == 100);
  CHECK(d.synthetic.n_train == 3000);

  try {
    config_from_json(json{{"schema_version", 1}, {"ensemble", {{"sise", 3}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ensemble.sise") != std::string::npos);
  }
  try {
    config_from_json(json{{"schema_version", 1}, {"replications", "many"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("replications") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(json{{"schema_version", 2}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::object()), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"schema_version", 1}, {"alphas", {0.0}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"schema_version", 1}, {"methods", json::array()}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"schema_version", 1}, {"replications", 0}}), ConfigError);

  const auto round = config_from_json(to_json(d));
  CHECK(to_json(round) == to_json(d));

  try {
    theory_config_from_json(json{{"schema_version", 1}, {"bounds", {{"t_left", 0.1}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bounds.t_left") != std::string::npos);
  }
}

TEST_CASE("report formatting and round trip") {
  CHECK(format_percent(0.0855, 0.0068) == "8.55%±0.68%");
  CHECK(format_percent(-0.0042, 0.0011) == "-0.42%±0.11%");

  ReportTable one;
  one.rows.push_back({"vanilla", "original", 0.02, "calibration_error", 0.0855, 0.0068, 100});
  const auto text = csv_text(one);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.rfind("method,mode,alpha,metric,mean,std_err,reps\n", 0) == 0);

  std::ostringstream md;
  emit_markdown(one, md);
  CHECK(md.str().find("8.55%±0.68%") != std::string::npos);
  CHECK(md.str().find("### calibration_error") != std::string::npos);

  Rng rng(4);
  ReportTable many;
  for (int i = 0; i < 50; ++i) {
    many.rows.push_back({"vad", "original", rng.uniform(), "ece", rng.normal() * 1e-3, std::exp(rng.normal()), 7});
  }
  std::istringstream in(csv_text(many));
  const auto back = parse_csv_report(in);
  REQUIRE(back.rows.size() == 50);
  for (int i = 0; i < 50; ++i) {
    CHECK(back.rows[i].alpha == many.rows[i].alpha);
    CHECK(back.rows[i].mean == many.rows[i].mean);
    CHECK(back.rows[i].std_err == many.rows[i].std_err);
  }
  CHECK_THROWS_AS(emit(ReportTable{}, ReportFormat::Csv, scratch("empty.csv")), InputError);
  CHECK_THROWS(emit(one, ReportFormat::Csv, "/nonexistent_dir/x/report.csv"));
}

TEST_CASE("reduced theory check passes and injection gives zero bias") {
  TheoryCheckConfig cfg = theory_config_from_json(json{{"schema_version", 1},
                                                       {"consistency", {{"refits", 30}, {"items", 20000}}},
                                                       {"random_settings", {{"count", 3}, {"refits", 30}}},
                                                       {"decomposition", {{"refits", 150}, {"grid", 500}}},
                                                       {"inject_beta_star", true}});
  const auto report = run_theory_check(cfg);
  CHECK(report.at("pass").get<bool>());
  REQUIRE(report.contains("injected_beta_star"));
  for (const auto& row : report.at("injected_beta_star")) {
    CHECK(std::abs(row.at("leading_term").get<double>()) <= 1e-12);
    CHECK(row.at("pass").get<bool>());
  }
  CHECK(report.at("hprime_bounds").size() == 3);
}
