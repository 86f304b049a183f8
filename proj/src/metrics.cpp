#include "vadcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vadcal/core.hpp"

namespace vadcal::metrics {

namespace {

void check_aligned(std::span<const double> preds, std::span<const double> labels, const char* who) {
  if (preds.size() != labels.size()) throw InputError(std::string(who) + ": preds and labels differ in length");
  if (preds.empty()) throw InputError(std::string(who) + ": empty input");
}

}  // namespace

SelectionSet select_top_alpha(std::span<const double> preds, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in (0, 1], got " + std::to_string(alpha));
  if (preds.empty()) throw InputError("select_top_alpha: empty predictions");
  const std::size_t n = preds.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n))));
  SelectionSet set;
  set.alpha = alpha;
  set.indices.resize(n);
  std::iota(set.indices.begin(), set.indices.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) { return preds[a] > preds[b] || (preds[a] == preds[b] && a < b); };
  std::partial_sort(set.indices.begin(), set.indices.begin() + static_cast<std::ptrdiff_t>(k), set.indices.end(),
                    before);
  set.indices.resize(k);
  return set;
}

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> indices) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(values[i]);
  return out;
}

double calibration_error(std::span<const double> preds, std::span<const double> labels) {
  check_aligned(preds, labels, "calibration_error");
  const double sp = std::accumulate(preds.begin(), preds.end(), 0.0);
  const double sy = std::accumulate(labels.begin(), labels.end(), 0.0);
  if (!(sy > 0.0)) throw UndefinedMetric("calibration error is undefined with no positive labels");
  return sp / sy - 1.0;
}

BinScheme bin_scheme_from_name(std::string_view name) {
  if (name == "equal_width") return BinScheme::EqualWidth;
  if (name == "equal_mass") return BinScheme::EqualMass;
  throw ConfigError("unknown bin scheme '" + std::string(name) + "' (expected equal_width|equal_mass)");
}

std::string_view bin_scheme_name(BinScheme scheme) {
  return scheme == BinScheme::EqualWidth ? "equal_width" : "equal_mass";
}

BinnedErrors binned_errors(std::span<const double> preds, std::span<const double> labels, std::size_t M,
                           BinScheme scheme) {
  check_aligned(preds, labels, "binned_errors");
  if (M == 0) throw InputError("bin count must be at least 1");
  const std::size_t n = preds.size();
  std::vector<std::size_t> bin(n);
  BinnedErrors out;
  out.bins.resize(M);

  if (scheme == BinScheme::EqualWidth) {
    const auto [lo_it, hi_it] = std::minmax_element(preds.begin(), preds.end());
    const double lo = *lo_it, hi = *hi_it;
    const double width = (hi - lo) / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) {
      out.bins[m].lower = lo + width * static_cast<double>(m);
      out.bins[m].upper = m + 1 == M ? hi : lo + width * static_cast<double>(m + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (hi == lo) {
        bin[i] = 0;
        continue;
      }
      const auto m = static_cast<std::size_t>(std::floor((preds[i] - lo) / (hi - lo) * static_cast<double>(M)));
      bin[i] = std::min(m, M - 1);
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return preds[a] < preds[b] || (preds[a] == preds[b] && labels[a] < labels[b]);
    });
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t start = m * n / M, end = (m + 1) * n / M;
      for (std::size_t s = start; s < end; ++s) bin[order[s]] = m;
      if (start < end) {
        out.bins[m].lower = preds[order[start]];
        out.bins[m].upper = preds[order[end - 1]];
      }
    }
  }

  std::vector<double> sum_pred(M, 0.0), sum_label(M, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    sum_pred[bin[i]] += preds[i];
    sum_label[bin[i]] += labels[i];
    ++out.bins[bin[i]].count;
  }
  for (std::size_t m = 0; m < M; ++m) {
    BinDetail& b = out.bins[m];
    if (b.count == 0) continue;
    const auto c = static_cast<double>(b.count);
    b.mean_pred = sum_pred[m] / c;
    b.mean_label = sum_label[m] / c;
    const double gap = std::abs(b.mean_label - b.mean_pred);
    out.ece += c / static_cast<double>(n) * gap;
    out.mce = std::max(out.mce, gap);
  }
  return out;
}

double ece(std::span<const double> preds, std::span<const double> labels, std::size_t M, BinScheme scheme) {
  return binned_errors(preds, labels, M, scheme).ece;
}

double mce(std::span<const double> preds, std::span<const double> labels, std::size_t M, BinScheme scheme) {
  return binned_errors(preds, labels, M, scheme).mce;
}

double log_loss(std::span<const double> preds, std::span<const double> labels) {
  check_aligned(preds, labels, "log_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Probability p = Probability::clamped(preds[i]);
    total -= labels[i] * std::log(p.value()) + (1.0 - labels[i]) * std::log(p.complement());
  }
  return total / static_cast<double>(preds.size());
}

double log_loss_reduction(const MetricsReport& method, const MetricsReport& reference) {
  if (!(reference.log_loss > 0.0)) throw UndefinedMetric("log-loss reduction needs a positive reference log loss");
  return method.log_loss / reference.log_loss - 1.0;
}

MetricsReport evaluate(std::span<const double> preds, std::span<const double> labels, std::size_t M,
                       BinScheme scheme) {
  check_aligned(preds, labels, "evaluate");
  MetricsReport r;
  try {
    r.calibration_error = calibration_error(preds, labels);
  } catch (const UndefinedMetric&) {
    r.calibration_error.reset();
  }
  BinnedErrors b = binned_errors(preds, labels, M, scheme);
  r.ece = b.ece;
  r.mce = b.mce;
  r.bins = std::move(b.bins);
  r.log_loss = log_loss(preds, labels);
  r.bin_count = M;
  r.selected = preds.size();
  return r;
}

MetricsReport evaluate_top_alpha(std::span<const double> preds, std::span<const double> labels, double alpha,
                                 std::size_t M, BinScheme scheme) {
  check_aligned(preds, labels, "evaluate_top_alpha");
  const SelectionSet set = select_top_alpha(preds, alpha);
  const auto p = gather(preds, set.indices);
  const auto y = gather(labels, set.indices);
  return evaluate(p, y, M, scheme);
}

}  // namespace vadcal::metrics
