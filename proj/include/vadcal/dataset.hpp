#pragma once

// Synthetic Gaussian generation, covariate-shift construction by rejection,
// four-way splitting, and CSV ingestion of feature and score files.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vadcal/core.hpp"

namespace vadcal::data {

struct LabeledDataset {
  Eigen::MatrixXd features;  // n x d
  Eigen::VectorXd labels;    // n entries in {0, 1}
  std::vector<std::int64_t> row_ids;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t dims() const noexcept { return static_cast<std::size_t>(features.cols()); }
  bool empty() const noexcept { return features.rows() == 0; }
  double positive_rate() const;

  // Throws DataError unless n >= 1, d >= 1, all entries finite and labels binary.
  void validate() const;
  // Rows in the given order (indices may repeat).
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

// Builds a dataset with row ids 0..n-1 and validates it.
LabeledDataset make_dataset(Eigen::MatrixXd features, Eigen::VectorXd labels);

// Feature covariance given either as a diagonal or as a full matrix.
class Covariance {
 public:
  Covariance() = default;
  static Covariance diagonal(Eigen::VectorXd variances);
  static Covariance isotropic(std::size_t dim, double variance);
  // Throws ConfigError if not symmetric positive definite (Cholesky fails).
  static Covariance full(Eigen::MatrixXd matrix);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  // Lower-triangular L with L L^T = Sigma.
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }

 private:
  Covariance(Eigen::MatrixXd matrix, Eigen::MatrixXd factor)
      : matrix_(std::move(matrix)), factor_(std::move(factor)) {}
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd factor_;
};

struct GaussianConfig {
  Eigen::VectorXd mu;
  Covariance sigma;
  Eigen::VectorXd beta_star;
  std::size_t n = 0;

  void validate() const;
};

// n iid rows X ~ N(mu, Sigma), Y ~ Bernoulli(sigmoid(beta_star . X)).
LabeledDataset generate_synthetic(const GaussianConfig& cfg, Rng& rng);

// Draws only the feature matrix (labels left empty); used for unlabeled sets.
Eigen::MatrixXd sample_features(const Eigen::VectorXd& mu, const Covariance& sigma, std::size_t n,
                                Rng& rng);

using KeepProbability = std::function<double(double)>;

// Keep with probability 1 - p.
KeepProbability keep_one_minus_p();
// 1 - p below a, 0.1 above b, linear in between (2.2 - 7p at the defaults).
KeepProbability keep_piecewise(double a = 0.2, double b = 0.3);

struct ShiftResult {
  LabeledDataset data;
  std::vector<std::size_t> kept;  // source row indices, ascending
  std::vector<std::string> warnings;
};

// Retains row i independently with probability keep(aux_scores[i]). Labels of
// retained rows are preserved, so only the feature marginal changes.
ShiftResult rejection_shift(const LabeledDataset& data, const KeepProbability& keep,
                            std::span<const double> aux_scores, Rng& rng);

struct SplitSpec {
  double train = 0.85;
  double val_train = 0.015;
  double val_test = 0.015;
  double test = 0.12;

  void validate() const;
};

struct FourWaySplit {
  LabeledDataset train;
  LabeledDataset val_train;
  LabeledDataset val_test;
  LabeledDataset test;
};

// Uniform shuffle, then floor-allocated sizes with the remainder going to test.
FourWaySplit split(const LabeledDataset& data, const SplitSpec& spec, Rng& rng);
std::array<std::size_t, 4> split_sizes(std::size_t n, const SplitSpec& spec);

struct CsvSchema {
  std::optional<std::size_t> feature_count;
};

// Header `label,f1,...,fd`.
LabeledDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
LabeledDataset read_csv(std::istream& in, const CsvSchema& schema = {});
void write_csv(const LabeledDataset& data, const std::filesystem::path& path);
void write_csv(const LabeledDataset& data, std::ostream& out);

// Label column plus S logit columns, header `label,l1,...,lS`.
struct ScoredRows {
  Eigen::VectorXd labels;
  Eigen::MatrixXd logits;  // n x S

  std::size_t rows() const noexcept { return static_cast<std::size_t>(logits.rows()); }
  std::size_t members() const noexcept { return static_cast<std::size_t>(logits.cols()); }
};

ScoredRows load_scores_csv(const std::filesystem::path& path);
ScoredRows read_scores_csv(std::istream& in);
void write_scores_csv(const ScoredRows& rows, const std::filesystem::path& path);
void write_scores_csv(const ScoredRows& rows, std::ostream& out);

// Text for a double with 17 significant digits (round-trips exactly).
std::string format_double(double value);

}  // namespace vadcal::data
