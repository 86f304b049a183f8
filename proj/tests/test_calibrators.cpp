#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "oracles.hpp"
#include "vadcal/calibrators.hpp"
#include "vadcal/core.hpp"

using namespace vadcal;
using namespace vadcal::calib;

TEST_CASE("Platt on antisymmetric data has zero offset") {
  std::vector<double> l, y;
  for (int i = 0; i < 50; ++i) {
    l.insert(l.end(), {-1.0, 1.0});
    y.insert(y.end(), {0.0, 1.0});
  }
  const auto p = fit_platt(l, y);
  CHECK(std::abs(p.b) <= 1e-9);
  CHECK(p.a > 0.0);
  // Stationary point of the smoothed loss.
  const double h = 1e-6;
  const double da = (oracle::platt_loss(l, y, p.a + h, p.b) - oracle::platt_loss(l, y, p.a - h, p.b)) / (2 * h);
  CHECK(std::abs(da) <= 1e-4);
}

TEST_CASE("Platt recovers the identity on calibrated data") {
  Rng rng(1);
  const int n = 100000;
  std::vector<double> l(n), y(n);
  for (int i = 0; i < n; ++i) {
    l[i] = 2.0 * rng.normal();
    y[i] = rng.bernoulli(oracle::sigmoid(l[i])) ? 1.0 : 0.0;
  }
  const auto p = fit_platt(l, y);
  CHECK(std::abs(p.a - 1.0) <= 0.1);
  CHECK(std::abs(p.b) <= 0.05);
}

TEST_CASE("Platt with constant logits maximizes over the offset only") {
  std::vector<double> l(40, 0.7), y(40, 0.0);
  for (int i = 0; i < 13; ++i) y[i] = 1.0;
  const auto p = fit_platt(l, y);
  CHECK(p.a == 0.0);
  const double b = oracle::golden_max([&](double v) { return -oracle::platt_loss(l, y, 0.0, v); }, -10.0, 10.0);
  CHECK(p.b == doctest::Approx(b).epsilon(1e-6));
}

TEST_CASE("Platt matches a nested golden-section oracle") {
  Rng rng(2);
  std::vector<double> l(60), y(60);
  for (int i = 0; i < 60; ++i) {
    l[i] = rng.normal();
    y[i] = rng.bernoulli(oracle::sigmoid(0.5 + 1.7 * l[i])) ? 1.0 : 0.0;
  }
  const auto p = fit_platt(l, y);
  auto best_b = [&](double a) {
    return oracle::golden_max([&](double b) { return -oracle::platt_loss(l, y, a, b); }, -20.0, 20.0, 1e-10);
  };
  const double a = oracle::golden_max([&](double a) { return -oracle::platt_loss(l, y, a, best_b(a)); }, -20.0, 20.0, 1e-9);
  CHECK(p.a == doctest::Approx(a).epsilon(1e-5));
  CHECK(p.b == doctest::Approx(best_b(a)).epsilon(1e-5));
}

TEST_CASE("Platt rejects a single class and is positive on correlated data") {
  std::vector<double> l{0.1, 0.2, 0.3}, y{1, 1, 1};
  CHECK_THROWS_AS(fit_platt(l, y), DegenerateError);

  Rng rng(3);
  const int n = 10000;
  std::vector<double> s(n), t(n);
  for (int i = 0; i < n; ++i) {
    s[i] = rng.normal();
    t[i] = rng.bernoulli(oracle::sigmoid(0.2 * s[i])) ? 1.0 : 0.0;
  }
  const auto p = fit_platt(s, t);
  CHECK(p.a > 0.0);
  const auto out = p.apply(s);
  for (int i = 0; i + 1 < 2000; ++i) {
    if (s[i] < s[i + 1]) CHECK(out[i] < out[i + 1]);
  }
}

TEST_CASE("histogram binning examples") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9}, y{0, 1, 1, 1};
  const auto h = fit_histogram(s, y, 2);
  REQUIRE(h.values.size() == 2);
  CHECK(h.values[0] == 0.5);
  CHECK(h.values[1] == 1.0);
  CHECK(h.edges.size() == 3);
  for (std::size_t i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] > h.edges[i - 1]);
  CHECK(h.apply(std::vector<double>{-5.0})[0] == 0.5);
  CHECK(h.apply(std::vector<double>{5.0})[0] == 1.0);

  const auto zeros = fit_histogram(s, std::vector<double>(4, 0.0), 2);
  for (double v : zeros.values) CHECK(v == 0.0);
  const auto one = fit_histogram(s, y, 1);
  CHECK(one.values == std::vector<double>{0.75});
  CHECK_THROWS_AS(fit_histogram(s, y, 5), InputError);
}

TEST_CASE("histogram binning is exact on its fit set") {
  Rng rng(4);
  const std::size_t n = 1000, B = 20;
  std::vector<double> s(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.bernoulli(s[i] * s[i]) ? 1.0 : 0.0;
  }
  const auto h = fit_histogram(s, y, B);
  const auto out = h.apply(s);
  std::map<std::size_t, std::pair<double, double>> per_bin;
  for (std::size_t i = 0; i < n; ++i) {
    auto& [pred, lab] = per_bin[h.bin_of(s[i])];
    pred += out[i];
    lab += y[i];
  }
  CHECK(per_bin.size() == B);
  double ece = 0.0;
  for (const auto& [bin, sums] : per_bin) {
    CHECK(sums.first == doctest::Approx(sums.second).epsilon(1e-12));
    ece += std::abs(sums.first - sums.second) / double(n);
  }
  CHECK(ece <= 1e-12);
}

TEST_CASE("isotonic examples") {
  const auto mono = fit_isotonic(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0, 0, 1, 1});
  CHECK(mono.values == std::vector<double>{0, 0, 1, 1});
  const auto pair = fit_isotonic(std::vector<double>{1, 2}, std::vector<double>{1, 0});
  CHECK(pair.values == std::vector<double>{0.5, 0.5});
  const auto step = fit_isotonic(std::vector<double>{1, 2, 3}, std::vector<double>{0, 1, 1});
  CHECK(step.apply_one(0.0) == 0.0);
  CHECK(step.apply_one(1.5) == 0.0);
  CHECK(step.apply_one(2.0) == 1.0);
  CHECK(step.apply_one(9.0) == 1.0);
  const auto clamped = calib::apply(step, std::vector<double>{0.0, 2.5});
  CHECK(clamped[0] == kProbabilityEpsilon);
  CHECK(clamped[1] == 1.0 - kProbabilityEpsilon);
}

TEST_CASE("PAVA equals the brute-force oracle on 10^3 random instances") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    const bool ties = trial % 2 == 1;
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = ties ? double(rng.index(4)) : rng.normal();
      y[i] = trial % 3 == 0 ? rng.uniform() : double(rng.bernoulli(0.5));
    }
    const auto fit = fit_isotonic(s, y);
    for (std::size_t i = 1; i < fit.values.size(); ++i) CHECK(fit.values[i] >= fit.values[i - 1]);

    std::map<double, std::pair<double, double>> levels;
    for (std::size_t i = 0; i < n; ++i) {
      levels[s[i]].first += y[i];
      levels[s[i]].second += 1.0;
    }
    std::vector<double> ly, lw, lx;
    for (const auto& [x, sw] : levels) {
      lx.push_back(x);
      ly.push_back(sw.first / sw.second);
      lw.push_back(sw.second);
    }
    const auto expect = oracle::isotonic_brute_force(ly, lw);
    REQUIRE(fit.breakpoints == lx);
    for (std::size_t k = 0; k < lx.size(); ++k) worst = std::max(worst, std::abs(fit.values[k] - expect[k]));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("scaling-binning") {
  Rng rng(6);
  const std::size_t n = 40;
  std::vector<double> l(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    l[i] = rng.normal();
    y[i] = rng.bernoulli(oracle::sigmoid(l[i])) ? 1.0 : 0.0;
  }
  const auto platt = fit_platt(l, y);
  const auto scaled = platt.apply(l);

  const auto full = fit_scaling_binning(l, y, n);
  const auto out = full.apply(l);
  for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(scaled[i]).epsilon(1e-12));

  const auto single = fit_scaling_binning(l, y, 1);
  const double m = oracle::mean(scaled);
  for (double v : single.apply(l)) CHECK(v == doctest::Approx(m).epsilon(1e-12));

  const std::vector<double> l4{-1.5, -0.2, 0.4, 2.0}, y4{0, 1, 0, 1};
  const auto p4 = fit_platt(l4, y4);
  const auto s4 = p4.apply(l4);
  const auto sb = fit_scaling_binning(l4, y4, 2);
  const auto o4 = sb.apply(l4);
  const double lo = (s4[0] + s4[1]) / 2, hi = (s4[2] + s4[3]) / 2;
  CHECK(o4[0] == doctest::Approx(lo).epsilon(1e-12));
  CHECK(o4[1] == doctest::Approx(lo).epsilon(1e-12));
  CHECK(o4[2] == doctest::Approx(hi).epsilon(1e-12));
  CHECK(o4[3] == doctest::Approx(hi).epsilon(1e-12));
  CHECK_THROWS_AS(fit_scaling_binning(l4, y4, 5), InputError);
}

TEST_CASE("monotone calibrators preserve order weakly") {
  Rng rng(7);
  std::vector<double> l(500), y(500);
  for (std::size_t i = 0; i < l.size(); ++i) {
    l[i] = rng.normal();
    y[i] = rng.bernoulli(oracle::sigmoid(l[i])) ? 1.0 : 0.0;
  }
  std::vector<double> grid;
  for (int k = -400; k <= 400; ++k) grid.push_back(k / 100.0);
  for (const Calibrator& c : {Calibrator{fit_platt(l, y)}, Calibrator{fit_isotonic(l, y)}, Calibrator{fit_scaling_binning(l, y, 10)}}) {
    const auto out = calib::apply(c, grid);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i] >= out[i - 1]);
    for (double v : out) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("json round trip for every calibrator kind") {
  Rng rng(8);
  std::vector<double> l(200), y(200);
  for (std::size_t i = 0; i < l.size(); ++i) {
    l[i] = rng.normal();
    y[i] = rng.bernoulli(oracle::sigmoid(l[i])) ? 1.0 : 0.0;
  }
  const std::vector<Calibrator> all{fit_platt(l, y), fit_histogram(l, y, 10), fit_isotonic(l, y), fit_scaling_binning(l, y, 10)};
  for (const auto& c : all) {
    const auto j = to_json(c);
    CHECK(j.at("kind").get<std::string>() == kind_name(c));
    const auto back = calibrator_from_json(j);
    CHECK(kind_name(back) == kind_name(c));
    CHECK(calib::apply(back, l) == calib::apply(c, l));
  }
  CHECK_THROWS(calibrator_from_json(nlohmann::json{{"kind", "spline"}}));
}
