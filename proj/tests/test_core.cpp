#include "doctest.h"

#include <cmath>
#include <limits>

#include "vadcal/core.hpp"

using namespace vadcal;

TEST_CASE("phi_eval on known points") {
  CHECK(phi_eval(LinkFunction::logistic(), 0.0).value() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(phi_eval(LinkFunction::identity(), 0.3).value() == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(phi_eval(LinkFunction::logistic(), std::log(3.0)).value() == doctest::Approx(0.75).epsilon(1e-14));
  CHECK_THROWS_AS(phi_eval(LinkFunction::logistic(), std::numeric_limits<double>::infinity()), InputError);
  CHECK_THROWS_AS(phi_eval(LinkFunction::logistic(), std::nan("")), InputError);
}

TEST_CASE("phi_inverse_eval on known points") {
  CHECK(phi_inverse_eval(LinkFunction::logistic(), 0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(phi_inverse_eval(LinkFunction::logistic(), 0.75) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(phi_inverse_eval(LinkFunction::identity(), 0.9) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK_THROWS_AS(phi_inverse_eval(LinkFunction::logistic(), 1.5), InputError);
  CHECK_THROWS_AS(phi_inverse_eval(LinkFunction::logistic(), -0.1), InputError);
  CHECK_THROWS_AS(Probability(1.0000001), InputError);
}

TEST_CASE("probabilities are clamped away from 0 and 1") {
  const Probability one(1.0), zero(0.0);
  CHECK(one.value() == 1.0 - kProbabilityEpsilon);
  CHECK(zero.value() == kProbabilityEpsilon);
  CHECK(std::isfinite(phi_inverse_eval(LinkFunction::logistic(), one)));
  CHECK(std::isfinite(phi_inverse_eval(LinkFunction::logistic(), zero)));
  CHECK(phi_eval(LinkFunction::logistic(), 800.0).value() == 1.0 - kProbabilityEpsilon);
  CHECK(phi_eval(LinkFunction::identity(), 3.0).value() == 1.0 - kProbabilityEpsilon);
}

TEST_CASE("logistic round trip on 10^4 random logits") {
  Rng rng(11);
  const auto link = LinkFunction::logistic();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double t = -20.0 + 40.0 * rng.uniform();
    worst = std::max(worst, std::abs(phi_inverse_eval(link, phi_eval(link, t)) - t));
  }
  CHECK(worst <= 1e-8);

  // Holds at 1e-9 everywhere the clamp leaves the value untouched.
  worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double t = -27.0 + 54.0 * rng.uniform();
    worst = std::max(worst, std::abs(phi_inverse_eval(link, phi_eval(link, t)) - t));
  }
  CHECK(worst <= 1e-9);

  // phi(phi^-1(p)) = p within 1e-9 over the clamped range.
  for (double p : {1e-12, 1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6, 1.0 - 1e-12}) {
    CHECK(std::abs(phi_eval(link, phi_inverse_eval(link, p)).value() - p) <= 1e-9);
  }
}

TEST_CASE("identity round trip is exact") {
  const auto link = LinkFunction::identity();
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform();
    CHECK(phi_inverse_eval(link, phi_eval(link, p)) == doctest::Approx(p).epsilon(1e-15));
  }
}

TEST_CASE("links are strictly increasing and derivatives match") {
  for (auto link : {LinkFunction::logistic(), LinkFunction::identity()}) {
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = -300; i <= 300; ++i) {
      const double t = link.kind() == LinkKind::Logistic ? i / 20.0 : i / 1000.0 + 0.5;
      const double v = link.phi(t);
      CHECK(v > prev);
      prev = v;
      const double h = 1e-6;
      const double fd = (link.phi(t + h) - link.phi(t - h)) / (2 * h);
      CHECK(link.phi_derivative(t) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  const auto lg = LinkFunction::logistic();
  for (double t : {-3.0, 0.0, 1.7}) CHECK(lg.phi_derivative(t) == doctest::Approx(lg.phi(t) * (1 - lg.phi(t))));
  CHECK(LinkFunction::identity().phi_derivative(12.0) == 1.0);
}

TEST_CASE("link names parse") {
  CHECK(link_from_name("logistic") == LinkFunction::logistic());
  CHECK(link_from_name("identity") == LinkFunction::identity());
  CHECK_THROWS_AS(link_from_name("probit"), ConfigError);
}

TEST_CASE("equal seeds give equal streams for 10^6 draws") {
  Rng a(123456789), b(123456789);
  bool same = true;
  for (int i = 0; i < 1000000; ++i) same = same && a.next_u64() == b.next_u64();
  CHECK(same);
  Rng c(123456790);
  Rng d(123456789);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("child streams are reproducible and distinct") {
  const Rng root(42);
  Rng x = root.child(3), y = root.child(3), z = root.child(4);
  CHECK(x.next_u64() == y.next_u64());
  CHECK(x.next_u64() != z.next_u64());
}

TEST_CASE("uniform and normal draws have the right moments") {
  Rng rng(99);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 5 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
}

TEST_CASE("index is unbiased and permutations are permutations") {
  Rng rng(7);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[rng.index(6)];
  for (int c : counts) CHECK(std::abs(c - 10000) < 5 * std::sqrt(60000 * (1.0 / 6) * (5.0 / 6)));
  auto perm = random_permutation(50, rng);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(perm[i] == i);
}
