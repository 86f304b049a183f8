#pragma once

// Brute-force and closed-form reference implementations used to check the
// library. None of these call into the code under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Inverse CDF by bisection on the erfc-based CDF.
inline double normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Upper-tail quantile via the complementary CDF, accurate for tiny alpha.
inline double upper_quantile(double alpha) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(mid / std::numbers::sqrt2) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Golden-section search for the maximum of a unimodal f on [a, b].
inline double golden_max(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Weighted isotonic least squares by enumerating every contiguous partition
// of the ordered levels; the optimum is block-constant with block means.
inline std::vector<double> isotonic_brute_force(const std::vector<double>& y, const std::vector<double>& w) {
  const std::size_t n = y.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_fit;
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<double> fit(n);
    std::size_t start = 0;
    double prev = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (std::size_t i = 0; i < n; ++i) {
      const bool cut = i == n - 1 || (mask >> i) & 1u;
      if (!cut) continue;
      double sw = 0.0, sy = 0.0;
      for (std::size_t k = start; k <= i; ++k) {
        sw += w[k];
        sy += w[k] * y[k];
      }
      const double m = sy / sw;
      if (m < prev - 1e-15) monotone = false;
      prev = m;
      for (std::size_t k = start; k <= i; ++k) fit[k] = m;
      start = i + 1;
    }
    if (!monotone) continue;
    double sse = 0.0;
    for (std::size_t k = 0; k < n; ++k) sse += w[k] * (y[k] - fit[k]) * (y[k] - fit[k]);
    if (sse < best - 1e-15) {
      best = sse;
      best_fit = fit;
    }
  }
  return best_fit;
}

// Smoothed-target Platt loss at (a, b), written out directly.
inline double platt_loss(const std::vector<double>& l, const std::vector<double>& y, double a, double b) {
  double np = 0.0;
  for (double v : y) np += v;
  const double nn = static_cast<double>(y.size()) - np;
  const double tp = (np + 1.0) / (np + 2.0), tn = 1.0 / (nn + 2.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double t = y[i] == 1.0 ? tp : tn;
    const double p = sigmoid(a * l[i] + b);
    loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return loss;
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double std_err(const std::vector<double>& xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace oracle
