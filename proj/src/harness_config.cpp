#include <fstream>
#include <set>
#include <string>

#include "vadcal/harness.hpp"

namespace vadcal::harness {

using nlohmann::json;

namespace {

// Reads fields from one JSON object, remembering which keys were consumed so
// leftovers can be rejected by name.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("field '" + field(key) + "' has the wrong type");
    }
  }

  const json& object(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  // Scalar fills a dim-length vector; arrays are taken as given.
  void get_vector(const std::string& key, std::size_t dim, Eigen::VectorXd& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (v.is_number()) {
      out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), v.get<double>());
    } else if (v.is_array()) {
      std::vector<double> xs;
      try {
        xs = v.get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ConfigError("field '" + field(key) + "' must be a number or an array of numbers");
      }
      out = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    } else {
      throw ConfigError("field '" + field(key) + "' must be a number or an array of numbers");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void done() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown field '" + field(item.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? std::string("config") : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

SourceKind source_from_name(const std::string& name) {
  if (name == "synthetic") return SourceKind::Synthetic;
  if (name == "csv") return SourceKind::Csv;
  if (name == "scores") return SourceKind::Scores;
  throw ConfigError("field 'source' must be synthetic|csv|scores, got '" + name + "'");
}

std::string source_name(SourceKind s) {
  switch (s) {
    case SourceKind::Synthetic: return "synthetic";
    case SourceKind::Csv: return "csv";
    case SourceKind::Scores: return "scores";
  }
  return "";
}

ShiftKind shift_from_name(const std::string& name) {
  if (name == "none") return ShiftKind::None;
  if (name == "one_minus_p") return ShiftKind::OneMinusP;
  if (name == "piecewise") return ShiftKind::Piecewise;
  throw ConfigError("field 'csv.shift' must be none|one_minus_p|piecewise, got '" + name + "'");
}

std::string shift_name(ShiftKind s) {
  switch (s) {
    case ShiftKind::None: return "none";
    case ShiftKind::OneMinusP: return "one_minus_p";
    case ShiftKind::Piecewise: return "piecewise";
  }
  return "";
}

VarianceChoice variance_from_name(const std::string& name) {
  if (name == "auto") return VarianceChoice::Auto;
  if (name == "exchangeable") return VarianceChoice::Exchangeable;
  if (name == "anchored") return VarianceChoice::Anchored;
  throw ConfigError("field 'ensemble.variance_estimator' must be auto|exchangeable|anchored, got '" + name + "'");
}

std::string variance_name(VarianceChoice v) {
  switch (v) {
    case VarianceChoice::Auto: return "auto";
    case VarianceChoice::Exchangeable: return "exchangeable";
    case VarianceChoice::Anchored: return "anchored";
  }
  return "";
}

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void read_synthetic(ObjectReader& r, SyntheticSource& s) {
  r.get("dim", s.dim);
  const auto d = s.dim;
  s.beta_star = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d));
  s.mu_train = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 0.05);
  s.mu_test = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), -0.05);
  r.get_vector("beta_star", d, s.beta_star);
  r.get_vector("mu_train", d, s.mu_train);
  r.get_vector("mu_test", d, s.mu_test);
  r.get("variance", s.variance);
  r.get("n_train", s.n_train);
  r.get("n_val_train", s.n_val_train);
  r.get("n_val_test", s.n_val_test);
  r.get("n_test", s.n_test);
  r.done();
}

void validate_synthetic(const SyntheticSource& s) {
  const auto d = static_cast<Eigen::Index>(s.dim);
  if (d < 1) throw ConfigError("field 'synthetic.dim' must be at least 1");
  if (s.beta_star.size() != d) throw ConfigError("field 'synthetic.beta_star' must have length dim");
  if (s.mu_train.size() != d) throw ConfigError("field 'synthetic.mu_train' must have length dim");
  if (s.mu_test.size() != d) throw ConfigError("field 'synthetic.mu_test' must have length dim");
  if (!(s.variance > 0.0)) throw ConfigError("field 'synthetic.variance' must be positive");
  if (s.n_train < 2 || s.n_val_train < 2 || s.n_val_test < 2 || s.n_test < 1) {
    throw ConfigError("synthetic sample sizes must be at least 2 (n_test at least 1)");
  }
}

json synthetic_json(const SyntheticSource& s) {
  return {{"dim", s.dim},
          {"beta_star", vec(s.beta_star)},
          {"mu_train", vec(s.mu_train)},
          {"mu_test", vec(s.mu_test)},
          {"variance", s.variance},
          {"n_train", s.n_train},
          {"n_val_train", s.n_val_train},
          {"n_val_test", s.n_val_test},
          {"n_test", s.n_test}};
}

SyntheticSource default_synthetic() {
  SyntheticSource s;
  s.beta_star = Eigen::VectorXd::Ones(20);
  s.mu_train = Eigen::VectorXd::Constant(20, 0.05);
  s.mu_test = Eigen::VectorXd::Constant(20, -0.05);
  return s;
}

}  // namespace

MethodSpec method_from_name(std::string_view name) {
  MethodSpec m;
  std::string base(name);
  const std::string suffix = "+vad_plus";
  if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    m.mode = MethodMode::VadPlus;
    base.resize(base.size() - suffix.size());
  }
  if (base == "vanilla") m.base = BaseMethod::Vanilla;
  else if (base == "vad") m.base = BaseMethod::Vad;
  else if (base == "vad_p") m.base = BaseMethod::VadP;
  else if (base == "platt") m.base = BaseMethod::Platt;
  else if (base == "histogram") m.base = BaseMethod::Histogram;
  else if (base == "scaling_binning") m.base = BaseMethod::ScalingBinning;
  else if (base == "isotonic") m.base = BaseMethod::Isotonic;
  else throw ConfigError("unknown method '" + std::string(name) + "'");
  if (m.mode == MethodMode::VadPlus && (m.base == BaseMethod::Vad || m.base == BaseMethod::VadP)) {
    throw ConfigError("method '" + std::string(name) + "': +vad_plus applies to vanilla and baseline calibrators only");
  }
  return m;
}

std::string method_base_name(BaseMethod m) {
  switch (m) {
    case BaseMethod::Vanilla: return "vanilla";
    case BaseMethod::Vad: return "vad";
    case BaseMethod::VadP: return "vad_p";
    case BaseMethod::Platt: return "platt";
    case BaseMethod::Histogram: return "histogram";
    case BaseMethod::ScalingBinning: return "scaling_binning";
    case BaseMethod::Isotonic: return "isotonic";
  }
  return "";
}

std::string method_mode_name(MethodMode m) { return m == MethodMode::Original ? "original" : "vad_plus"; }

void ExperimentConfig::validate() const {
  if (source == SourceKind::Synthetic) validate_synthetic(synthetic);
  if (source == SourceKind::Csv) {
    if (csv.path.empty()) throw ConfigError("field 'csv.path' is required");
    try {
      csv.split.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("field 'csv.split': ") + e.what());
    }
  }
  if (source == SourceKind::Scores && (scores.val_train.empty() || scores.val_test.empty() || scores.test.empty())) {
    throw ConfigError("fields 'scores.val_train', 'scores.val_test' and 'scores.test' are required");
  }
  if (source != SourceKind::Scores && ensemble_size < 2) throw ConfigError("field 'ensemble.size' must be at least 2");
  if (!(ridge >= 0.0)) throw ConfigError("field 'ensemble.ridge' must be non-negative");
  if (methods.empty()) throw ConfigError("field 'methods' must be non-empty");
  if (alphas.empty()) throw ConfigError("field 'alphas' must be non-empty");
  for (double a : alphas) {
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("field 'alphas' entries must lie in (0, 1]");
  }
  if (metric_bins < 1) throw ConfigError("field 'metric_bins' must be at least 1");
  if (calibrator_bins < 1) throw ConfigError("field 'calibrator_bins' must be at least 1");
  if (replications < 1) throw ConfigError("field 'replications' must be at least 1");
}

vad::VarianceEstimator ExperimentConfig::variance_estimator() const {
  switch (variance) {
    case VarianceChoice::Exchangeable: return vad::VarianceEstimator::Exchangeable;
    case VarianceChoice::Anchored: return vad::VarianceEstimator::Anchored;
    case VarianceChoice::Auto: break;
  }
  return source != SourceKind::Scores && ensemble_mode == lm::EnsembleMode::Bootstrap
             ? vad::VarianceEstimator::Anchored
             : vad::VarianceEstimator::Exchangeable;
}

ExperimentConfig default_config(SourceKind source) {
  ExperimentConfig cfg;
  cfg.source = source;
  cfg.synthetic = default_synthetic();
  cfg.methods = {method_from_name("vanilla"), method_from_name("vad"), method_from_name("vad_p")};
  cfg.alphas = {0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10};
  if (source == SourceKind::Synthetic) {
    cfg.metric_bins = 10;
    cfg.metric_binning = metrics::BinScheme::EqualMass;
    cfg.replications = 100;
  } else {
    cfg.metric_bins = 50;
    cfg.metric_binning = metrics::BinScheme::EqualWidth;
    cfg.replications = source == SourceKind::Scores ? 1 : 10;
  }
  return cfg;
}

ExperimentConfig config_from_json(const json& j) {
  ObjectReader r(j, "");
  int version = 0;
  r.get("schema_version", version);
  if (!j.contains("schema_version")) throw ConfigError("field 'schema_version' is required");
  if (version != kSchemaVersion) {
    throw ConfigError("field 'schema_version' must be " + std::to_string(kSchemaVersion) + ", got " +
                      std::to_string(version));
  }
  std::string source = "synthetic";
  r.get("source", source);
  ExperimentConfig cfg = default_config(source_from_name(source));

  if (r.has("synthetic")) {
    ObjectReader s(r.object("synthetic"), "synthetic");
    read_synthetic(s, cfg.synthetic);
  }
  if (r.has("csv")) {
    ObjectReader c(r.object("csv"), "csv");
    std::string path, shift = "none";
    c.get("path", path);
    cfg.csv.path = path;
    c.get("shift", shift);
    cfg.csv.shift = shift_from_name(shift);
    c.get("shift_a", cfg.csv.shift_a);
    c.get("shift_b", cfg.csv.shift_b);
    if (c.has("split")) {
      ObjectReader sp(c.object("split"), "csv.split");
      sp.get("train", cfg.csv.split.train);
      sp.get("val_train", cfg.csv.split.val_train);
      sp.get("val_test", cfg.csv.split.val_test);
      sp.get("test", cfg.csv.split.test);
      sp.done();
    }
    c.done();
  }
  if (r.has("scores")) {
    ObjectReader c(r.object("scores"), "scores");
    std::string a, b, t;
    c.get("val_train", a);
    c.get("val_test", b);
    c.get("test", t);
    cfg.scores = {a, b, t};
    c.done();
  }
  if (r.has("ensemble")) {
    ObjectReader e(r.object("ensemble"), "ensemble");
    std::string mode = std::string(lm::ensemble_mode_name(cfg.ensemble_mode));
    std::string var = variance_name(cfg.variance);
    e.get("size", cfg.ensemble_size);
    e.get("mode", mode);
    e.get("variance_estimator", var);
    e.get("fit_intercept", cfg.fit_intercept);
    e.get("ridge", cfg.ridge);
    e.done();
    cfg.ensemble_mode = lm::ensemble_mode_from_name(mode);
    cfg.variance = variance_from_name(var);
  }

  std::vector<std::string> methods;
  r.get("methods", methods);
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(method_from_name(m));
  }
  r.get("alphas", cfg.alphas);
  r.get("metric_bins", cfg.metric_bins);
  std::string binning(metrics::bin_scheme_name(cfg.metric_binning));
  r.get("metric_binning", binning);
  cfg.metric_binning = metrics::bin_scheme_from_name(binning);
  r.get("calibrator_bins", cfg.calibrator_bins);
  std::string lambda_source = cfg.vad_plus_calibrated_lambda ? "calibrated" : "raw";
  r.get("vad_plus_lambda_source", lambda_source);
  if (lambda_source != "raw" && lambda_source != "calibrated") {
    throw ConfigError("field 'vad_plus_lambda_source' must be raw|calibrated");
  }
  cfg.vad_plus_calibrated_lambda = lambda_source == "calibrated";
  r.get("replications", cfg.replications);
  r.get("seed", cfg.seed);
  r.get("threads", cfg.threads);
  r.done();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> methods;
  for (const auto& m : cfg.methods) {
    methods.push_back(method_base_name(m.base) + (m.mode == MethodMode::VadPlus ? "+vad_plus" : ""));
  }
  json j{{"schema_version", kSchemaVersion},
         {"source", source_name(cfg.source)},
         {"ensemble",
          {{"size", cfg.ensemble_size},
           {"mode", std::string(lm::ensemble_mode_name(cfg.ensemble_mode))},
           {"variance_estimator", variance_name(cfg.variance)},
           {"fit_intercept", cfg.fit_intercept},
           {"ridge", cfg.ridge}}},
         {"methods", methods},
         {"alphas", cfg.alphas},
         {"metric_bins", cfg.metric_bins},
         {"metric_binning", std::string(metrics::bin_scheme_name(cfg.metric_binning))},
         {"calibrator_bins", cfg.calibrator_bins},
         {"vad_plus_lambda_source", cfg.vad_plus_calibrated_lambda ? "calibrated" : "raw"},
         {"replications", cfg.replications},
         {"seed", cfg.seed},
         {"threads", cfg.threads}};
  switch (cfg.source) {
    case SourceKind::Synthetic: j["synthetic"] = synthetic_json(cfg.synthetic); break;
    case SourceKind::Csv:
      j["csv"] = {{"path", cfg.csv.path.string()},
                  {"shift", shift_name(cfg.csv.shift)},
                  {"shift_a", cfg.csv.shift_a},
                  {"shift_b", cfg.csv.shift_b},
                  {"split",
                   {{"train", cfg.csv.split.train},
                    {"val_train", cfg.csv.split.val_train},
                    {"val_test", cfg.csv.split.val_test},
                    {"test", cfg.csv.split.test}}}};
      break;
    case SourceKind::Scores:
      j["scores"] = {{"val_train", cfg.scores.val_train.string()},
                     {"val_test", cfg.scores.val_test.string()},
                     {"test", cfg.scores.test.string()}};
      break;
  }
  return j;
}

TheoryCheckConfig theory_config_from_json(const json& j) {
  TheoryCheckConfig cfg;
  cfg.synthetic = default_synthetic();
  ObjectReader r(j, "");
  int version = 0;
  r.get("schema_version", version);
  if (!j.contains("schema_version")) throw ConfigError("field 'schema_version' is required");
  if (version != kSchemaVersion) {
    throw ConfigError("field 'schema_version' must be " + std::to_string(kSchemaVersion));
  }
  r.get("seed", cfg.seed);
  if (r.has("synthetic")) {
    ObjectReader s(r.object("synthetic"), "synthetic");
    read_synthetic(s, cfg.synthetic);
  }
  validate_synthetic(cfg.synthetic);
  r.get("alphas", cfg.alphas);
  r.get("inject_beta_star", cfg.inject_beta_star);
  if (r.has("consistency")) {
    ObjectReader c(r.object("consistency"), "consistency");
    c.get("refits", cfg.consistency_refits);
    c.get("items", cfg.consistency_items);
    c.done();
  }
  if (r.has("random_settings")) {
    ObjectReader c(r.object("random_settings"), "random_settings");
    c.get("count", cfg.random_settings);
    c.get("max_dim", cfg.random_max_dim);
    c.get("refits", cfg.random_refits);
    c.get("items", cfg.random_items);
    c.get("n_train", cfg.random_n_train);
    c.done();
  }
  if (r.has("decomposition")) {
    ObjectReader c(r.object("decomposition"), "decomposition");
    c.get("refits", cfg.decomposition_refits);
    c.get("grid", cfg.decomposition_grid);
    c.done();
  }
  if (r.has("bounds")) {
    ObjectReader c(r.object("bounds"), "bounds");
    c.get("alphas", cfg.bound_alphas);
    c.get("t_l", cfg.bound_t_l);
    c.get("t_r", cfg.bound_t_r);
    c.get("mu_l", cfg.bound_mu_l);
    c.get("mu_r", cfg.bound_mu_r);
    c.get("grid", cfg.bound_grid);
    c.done();
  }
  r.done();
  for (double a : cfg.alphas) {
    if (!(a > 0.0 && a <= 0.5)) throw ConfigError("field 'alphas' entries must lie in (0, 0.5]");
  }
  if (cfg.consistency_refits < 2 || cfg.random_refits < 2 || cfg.decomposition_refits < 2) {
    throw ConfigError("refit counts must be at least 2");
  }
  if (cfg.consistency_items < 100 || cfg.random_items < 100) throw ConfigError("item counts must be at least 100");
  if (cfg.random_max_dim < 1) throw ConfigError("field 'random_settings.max_dim' must be at least 1");
  return cfg;
}

}  // namespace vadcal::harness
