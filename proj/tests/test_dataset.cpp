#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "vadcal/dataset.hpp"

using namespace vadcal;
using namespace vadcal::data;

namespace {

GaussianConfig table_config(double mu, std::size_t n) {
  return {Eigen::VectorXd::Constant(20, mu), Covariance::isotropic(20, 0.01), Eigen::VectorXd::Ones(20), n};
}

LabeledDataset small_dataset(std::size_t n, Rng& rng) {
  GaussianConfig cfg{Eigen::VectorXd::Zero(2), Covariance::isotropic(2, 1.0), Eigen::VectorXd::Ones(2), n};
  return generate_synthetic(cfg, rng);
}

}  // namespace

TEST_CASE("saturated sigmoid gives all positives") {
  Rng rng(1);
  GaussianConfig cfg{Eigen::VectorXd::Constant(1, 1e6), Covariance::isotropic(1, 1.0), Eigen::VectorXd::Ones(1), 500};
  CHECK(generate_synthetic(cfg, rng).positive_rate() == 1.0);
}

TEST_CASE("positive rates at the reference configurations") {
  Rng rng(2024);
  CHECK(std::abs(generate_synthetic(table_config(0.05, 3000), rng).positive_rate() - 0.723) <= 0.02);
  CHECK(std::abs(generate_synthetic(table_config(-0.05, 3000), rng).positive_rate() - 0.277) <= 0.02);
}

TEST_CASE("sample mean and covariance within 5 standard errors at n = 1e5") {
  Eigen::MatrixXd S(3, 3);
  S << 1.0, 0.3, -0.2, 0.3, 0.5, 0.1, -0.2, 0.1, 2.0;
  Eigen::VectorXd mu(3);
  mu << 0.5, -1.0, 2.0;
  const std::size_t n = 100000;
  Rng rng(3);
  const Eigen::MatrixXd X = sample_features(mu, Covariance::full(S), n, rng);
  const Eigen::VectorXd m = X.colwise().mean();
  const Eigen::MatrixXd C = X.rowwise() - m.transpose();
  const Eigen::MatrixXd cov = (C.transpose() * C) / double(n - 1);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(m[i] - mu[i]) <= 5.0 * std::sqrt(S(i, i) / n));
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((S(i, i) * S(j, j) + S(i, j) * S(i, j)) / n);
      CHECK(std::abs(cov(i, j) - S(i, j)) <= 5.0 * se);
    }
  }
}

TEST_CASE("invalid covariance is a configuration error") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(Covariance::full(bad), ConfigError);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.1, 0.2, 1.0;
  CHECK_THROWS_AS(Covariance::full(asym), ConfigError);
  CHECK_THROWS_AS(Covariance::diagonal(Eigen::VectorXd::Constant(2, -1.0)), ConfigError);
}

TEST_CASE("rejection shift: identity, annihilation and binomial count") {
  Rng rng(4);
  const auto data = small_dataset(200, rng);
  std::vector<double> aux(200, 0.4);
  auto kept = rejection_shift(data, [](double) { return 1.0; }, aux, rng);
  CHECK(kept.data.rows() == 200);
  CHECK(kept.data.features == data.features);
  CHECK(kept.data.labels == data.labels);
  CHECK(kept.warnings.empty());

  auto none = rejection_shift(data, [](double) { return 0.0; }, aux, rng);
  CHECK(none.data.empty());
  CHECK(none.warnings.size() == 1);

  const auto big = small_dataset(100000, rng);
  std::vector<double> quarter(100000, 0.25);
  const auto r = rejection_shift(big, keep_one_minus_p(), quarter, rng);
  const double sd = std::sqrt(1e5 * 0.75 * 0.25);
  CHECK(std::abs(double(r.data.rows()) - 75000.0) <= 4.0 * sd);
  CHECK(std::is_sorted(r.kept.begin(), r.kept.end()));

  aux[3] = 1.2;
  CHECK_THROWS_AS(rejection_shift(data, keep_one_minus_p(), aux, rng), InputError);
}

TEST_CASE("piecewise keep probability") {
  const auto k = keep_piecewise();
  CHECK(k(0.1) == doctest::Approx(0.9));
  CHECK(k(0.2) == doctest::Approx(0.8));
  CHECK(k(0.25) == doctest::Approx(2.2 - 7 * 0.25));
  CHECK(k(0.3) == doctest::Approx(0.1));
  CHECK(k(0.9) == doctest::Approx(0.1));
  CHECK(keep_one_minus_p()(0.3) == doctest::Approx(0.7));
}

TEST_CASE("rejection shift leaves P(Y | X) unchanged") {
  Rng rng(5);
  GaussianConfig cfg{Eigen::VectorXd::Zero(1), Covariance::isotropic(1, 1.0), Eigen::VectorXd::Constant(1, 1.5), 200000};
  const auto data = generate_synthetic(cfg, rng);
  std::vector<double> aux(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) aux[i] = 1.0 / (1.0 + std::exp(-2.0 * data.features(i, 0)));
  const auto shifted = rejection_shift(data, keep_one_minus_p(), aux, rng).data;

  auto bucket_rates = [](const LabeledDataset& d) {
    std::vector<double> pos(8, 0.0), cnt(8, 0.0);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      const double x = d.features(i, 0);
      if (x < -2.0 || x >= 2.0) continue;
      const auto b = static_cast<std::size_t>((x + 2.0) / 0.5);
      cnt[b] += 1;
      pos[b] += d.labels[i];
    }
    return std::pair{pos, cnt};
  };
  const auto [p0, n0] = bucket_rates(data);
  const auto [p1, n1] = bucket_rates(shifted);
  for (std::size_t b = 0; b < 8; ++b) {
    REQUIRE(n1[b] > 100);
    const double r0 = p0[b] / n0[b], r1 = p1[b] / n1[b];
    const double se = std::sqrt(r0 * (1 - r0) * (1.0 / n0[b] + 1.0 / n1[b]));
    CHECK(std::abs(r0 - r1) <= 4.0 * se);
  }
  // The marginal does move.
  CHECK(shifted.features.col(0).mean() < data.features.col(0).mean() - 0.1);
}

TEST_CASE("split sizes") {
  auto s = split_sizes(100, SplitSpec{});
  CHECK(s == std::array<std::size_t, 4>{85, 1, 1, 13});
  s = split_sizes(4, SplitSpec{0.25, 0.25, 0.25, 0.25});
  CHECK(s == std::array<std::size_t, 4>{1, 1, 1, 1});
  Rng rng(6);
  CHECK_THROWS_AS(split(small_dataset(10, rng), SplitSpec{}, rng), DataError);
  CHECK_THROWS_AS(SplitSpec({0.5, 0.2, 0.2, 0.2}).validate(), ConfigError);
}

TEST_CASE("split is a deterministic partition") {
  Rng g(7);
  const auto data = small_dataset(1000, g);
  Rng a(8), b(8);
  const auto p = split(data, SplitSpec{}, a);
  const auto q = split(data, SplitSpec{}, b);
  CHECK(p.train.row_ids == q.train.row_ids);
  CHECK(p.test.row_ids == q.test.row_ids);

  std::multiset<std::int64_t> all;
  for (const auto* part : {&p.train, &p.val_train, &p.val_test, &p.test}) {
    for (std::size_t i = 0; i < part->rows(); ++i) {
      const auto id = part->row_ids[i];
      all.insert(id);
      CHECK(part->features.row(i) == data.features.row(id));
      CHECK(part->labels[i] == data.labels[id]);
    }
  }
  CHECK(all.size() == 1000);
  CHECK(std::set<std::int64_t>(all.begin(), all.end()).size() == 1000);
}

TEST_CASE("csv parsing") {
  std::istringstream ok("label,f1,f2\n1,0.5,-2\n0,3,4e-3\n");
  const auto d = read_csv(ok);
  CHECK(d.rows() == 2);
  CHECK(d.dims() == 2);
  CHECK(d.features(1, 1) == 4e-3);

  std::istringstream bad_label("label,f1\n1,0.5\n2,0.1\n");
  try {
    read_csv(bad_label);
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::istringstream ragged("label,f1,f2\n1,0.5\n");
  CHECK_THROWS_AS(read_csv(ragged), DataError);
  std::istringstream text("label,f1\n1,abc\n");
  CHECK_THROWS_AS(read_csv(text), DataError);
  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), DataError);
  std::istringstream schema("label,f1\n1,2\n");
  CHECK_THROWS_AS(read_csv(schema, CsvSchema{3}), DataError);
}

TEST_CASE("csv round trip") {
  Rng rng(9);
  const auto d = small_dataset(300, rng);
  std::stringstream buf;
  write_csv(d, buf);
  const auto back = read_csv(buf);
  CHECK((back.features - d.features).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(back.labels == d.labels);

  ScoredRows s{d.labels, d.features * 3.7};
  std::stringstream sbuf;
  write_scores_csv(s, sbuf);
  const auto sback = read_scores_csv(sbuf);
  CHECK(sback.members() == 2);
  CHECK(sback.logits == s.logits);
  CHECK(sback.labels == s.labels);
}

TEST_CASE("format_double round-trips") {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.uniform() - 0.5) * std::pow(10.0, double(rng.index(40)) - 20.0);
    CHECK(std::stod(format_double(v)) == v);
  }
}
