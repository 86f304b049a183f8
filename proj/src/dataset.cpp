#include "vadcal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace vadcal::data {

namespace {

void require_binary(double y, const std::string& where) {
  if (y != 0.0 && y != 1.0) throw DataError(where + ": label must be 0 or 1");
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_cell(std::string_view cell, std::size_t line_no, std::size_t col) {
  cell = trim(cell);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                    ": not a finite number: '" + std::string(cell) + "'");
  }
  return value;
}

// Reads a header with a `label` column followed by `<prefix>1..<prefix>k`,
// then the numeric body. Returns the rows as a dense matrix (label first).
Eigen::MatrixXd read_numeric_table(std::istream& in, char prefix, std::optional<std::size_t> expected) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError("missing header line");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM

  const auto header = split_commas(line);
  if (trim(header[0]) != "label") {
    throw DataError("line " + std::to_string(line_no) + ": header must start with 'label'");
  }
  const std::size_t k = header.size() - 1;
  if (k == 0) throw DataError("line " + std::to_string(line_no) + ": header has no value columns");
  for (std::size_t j = 0; j < k; ++j) {
    const std::string want = std::string(1, prefix) + std::to_string(j + 1);
    if (trim(header[j + 1]) != want) {
      throw DataError("line " + std::to_string(line_no) + ": expected header column '" + want +
                      "', found '" + std::string(trim(header[j + 1])) + "'");
    }
  }
  if (expected && *expected != k) {
    throw DataError("header declares " + std::to_string(k) + " columns, schema expects " +
                    std::to_string(*expected));
  }

  std::vector<double> values;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != k + 1) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(k + 1) +
                      " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j <= k; ++j) values.push_back(parse_cell(cells[j], line_no, j));
    require_binary(values[values.size() - k - 1], "line " + std::to_string(line_no));
    ++n;
  }
  if (n == 0) throw DataError("file has a header but no data rows");
  Eigen::MatrixXd table(n, k + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= k; ++j) table(i, j) = values[i * (k + 1) + j];
  }
  return table;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

double LabeledDataset::positive_rate() const {
  if (labels.size() == 0) return 0.0;
  return labels.mean();
}

void LabeledDataset::validate() const {
  if (features.rows() < 1) throw DataError("dataset has no rows");
  if (features.cols() < 1) throw DataError("dataset has no feature columns");
  if (labels.size() != features.rows()) throw DataError("label count does not match feature rows");
  if (!features.allFinite()) throw DataError("dataset contains non-finite features");
  for (Eigen::Index i = 0; i < labels.size(); ++i) require_binary(labels[i], "row " + std::to_string(i));
  if (!row_ids.empty() && row_ids.size() != rows()) throw DataError("row id count does not match rows");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.features.resize(n, features.cols());
  out.labels.resize(n);
  out.row_ids.reserve(indices.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
    out.features.row(i) = features.row(src);
    out.labels[i] = labels[src];
    out.row_ids.push_back(row_ids.empty() ? src : row_ids[static_cast<std::size_t>(src)]);
  }
  return out;
}

LabeledDataset make_dataset(Eigen::MatrixXd features, Eigen::VectorXd labels) {
  LabeledDataset data{std::move(features), std::move(labels), {}};
  data.row_ids.resize(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) data.row_ids[i] = static_cast<std::int64_t>(i);
  data.validate();
  return data;
}

Covariance Covariance::diagonal(Eigen::VectorXd variances) {
  if (variances.size() == 0) throw ConfigError("covariance has dimension 0");
  if (!variances.allFinite() || (variances.array() < 0.0).any()) {
    throw ConfigError("diagonal covariance must have finite non-negative entries");
  }
  Eigen::MatrixXd factor = variances.cwiseSqrt().asDiagonal();
  Eigen::MatrixXd matrix = variances.asDiagonal();
  return Covariance(std::move(matrix), std::move(factor));
}

Covariance Covariance::isotropic(std::size_t dim, double variance) {
  return diagonal(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), variance));
}

Covariance Covariance::full(Eigen::MatrixXd matrix) {
  if (matrix.rows() == 0 || matrix.rows() != matrix.cols()) {
    throw ConfigError("covariance must be a non-empty square matrix");
  }
  if (!matrix.allFinite() || !matrix.isApprox(matrix.transpose(), 1e-12)) {
    throw ConfigError("covariance must be finite and symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(matrix);
  if (llt.info() != Eigen::Success) throw ConfigError("covariance is not positive definite");
  Eigen::MatrixXd factor = llt.matrixL();
  return Covariance(std::move(matrix), std::move(factor));
}

void GaussianConfig::validate() const {
  const auto d = mu.size();
  if (d == 0) throw ConfigError("gaussian config: dimension must be positive");
  if (static_cast<Eigen::Index>(sigma.dim()) != d || beta_star.size() != d) {
    throw ConfigError("gaussian config: mu, sigma and beta_star dimensions disagree");
  }
  if (!mu.allFinite() || !beta_star.allFinite()) throw ConfigError("gaussian config: non-finite entries");
  if (n == 0) throw ConfigError("gaussian config: n must be positive");
}

Eigen::MatrixXd sample_features(const Eigen::VectorXd& mu, const Covariance& sigma, std::size_t n,
                                Rng& rng) {
  const Eigen::Index d = mu.size();
  const Eigen::MatrixXd& L = sigma.factor();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), d);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
    X.row(i) = (mu + L.triangularView<Eigen::Lower>() * z).transpose();
  }
  return X;
}

LabeledDataset generate_synthetic(const GaussianConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index d = cfg.mu.size();
  const Eigen::MatrixXd& L = cfg.sigma.factor();
  const auto n = static_cast<Eigen::Index>(cfg.n);
  Eigen::MatrixXd X(n, d);
  Eigen::VectorXd y(n);
  Eigen::VectorXd z(d);
  const LinkFunction logistic = LinkFunction::logistic();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
    X.row(i) = (cfg.mu + L.triangularView<Eigen::Lower>() * z).transpose();
    y[i] = rng.bernoulli(logistic.phi(X.row(i).dot(cfg.beta_star))) ? 1.0 : 0.0;
  }
  return make_dataset(std::move(X), std::move(y));
}

KeepProbability keep_one_minus_p() {
  return [](double p) { return 1.0 - p; };
}

KeepProbability keep_piecewise(double a, double b) {
  if (!(0.0 <= a && a < b && b <= 1.0)) throw ConfigError("piecewise keep: need 0 <= a < b <= 1");
  // Linear segment joins (a, 1 - a) to (b, 0.1).
  const double slope = (0.1 - (1.0 - a)) / (b - a);
  return [a, b, slope](double p) {
    if (p < a) return 1.0 - p;
    if (p > b) return 0.1;
    return (1.0 - a) + slope * (p - a);
  };
}

ShiftResult rejection_shift(const LabeledDataset& data, const KeepProbability& keep,
                            std::span<const double> aux_scores, Rng& rng) {
  if (aux_scores.size() != data.rows()) throw InputError("rejection_shift: aux scores not aligned with rows");
  ShiftResult result;
  for (std::size_t i = 0; i < aux_scores.size(); ++i) {
    const double p = aux_scores[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InputError("rejection_shift: aux score outside [0, 1] at row " + std::to_string(i));
    }
    const double k = std::clamp(keep(p), 0.0, 1.0);
    if (rng.uniform() < k) result.kept.push_back(i);
  }
  result.data = data.subset(result.kept);
  if (result.kept.empty()) {
    result.warnings.emplace_back("rejection_shift retained no rows");
    warn(result.warnings.back());
  }
  return result;
}

void SplitSpec::validate() const {
  const double parts[] = {train, val_train, val_test, test};
  for (double f : parts) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be finite and non-negative");
  }
  if (std::abs(train + val_train + val_test + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

std::array<std::size_t, 4> split_sizes(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  const double nd = static_cast<double>(n);
  // The 1e-9 guards against 0.85 * 100 landing a hair below 85.
  auto take = [&](double f) { return static_cast<std::size_t>(std::floor(f * nd + 1e-9)); };
  std::array<std::size_t, 4> sizes{take(spec.train), take(spec.val_train), take(spec.val_test), 0};
  const std::size_t used = sizes[0] + sizes[1] + sizes[2];
  if (used > n) throw ConfigError("split fractions over-allocate rows");
  sizes[3] = n - used;
  const double fractions[] = {spec.train, spec.val_train, spec.val_test, spec.test};
  const char* names[] = {"train", "val_train", "val_test", "test"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (fractions[i] > 0.0 && sizes[i] == 0) {
      throw DataError(std::string("split '") + names[i] + "' is empty: " + std::to_string(n) +
                      " rows are too few for its fraction");
    }
  }
  return sizes;
}

FourWaySplit split(const LabeledDataset& data, const SplitSpec& spec, Rng& rng) {
  const auto sizes = split_sizes(data.rows(), spec);
  const auto perm = random_permutation(data.rows(), rng);
  std::span<const std::size_t> all(perm);
  std::size_t offset = 0;
  auto next = [&](std::size_t count) {
    auto part = data.subset(all.subspan(offset, count));
    offset += count;
    return part;
  };
  FourWaySplit out;
  out.train = next(sizes[0]);
  out.val_train = next(sizes[1]);
  out.val_test = next(sizes[2]);
  out.test = next(sizes[3]);
  return out;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

LabeledDataset read_csv(std::istream& in, const CsvSchema& schema) {
  const Eigen::MatrixXd table = read_numeric_table(in, 'f', schema.feature_count);
  return make_dataset(table.rightCols(table.cols() - 1), table.col(0));
}

LabeledDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  auto in = open_for_read(path);
  try {
    return read_csv(in, schema);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_csv(const LabeledDataset& data, std::ostream& out) {
  out << "label";
  for (std::size_t j = 0; j < data.dims(); ++j) out << ",f" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    out << static_cast<int>(data.labels[i]);
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) out << ',' << format_double(data.features(i, j));
    out << '\n';
  }
}

void write_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_csv(data, out);
}

ScoredRows read_scores_csv(std::istream& in) {
  const Eigen::MatrixXd table = read_numeric_table(in, 'l', std::nullopt);
  return ScoredRows{table.col(0), table.rightCols(table.cols() - 1)};
}

ScoredRows load_scores_csv(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  try {
    return read_scores_csv(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_scores_csv(const ScoredRows& rows, std::ostream& out) {
  out << "label";
  for (std::size_t j = 0; j < rows.members(); ++j) out << ",l" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < rows.logits.rows(); ++i) {
    out << static_cast<int>(rows.labels[i]);
    for (Eigen::Index j = 0; j < rows.logits.cols(); ++j) out << ',' << format_double(rows.logits(i, j));
    out << '\n';
  }
}

void write_scores_csv(const ScoredRows& rows, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_scores_csv(rows, out);
}

}  // namespace vadcal::data
