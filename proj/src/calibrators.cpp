#include "vadcal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vadcal/core.hpp"

namespace vadcal::calib {

namespace {

void check_inputs(std::span<const double> scores, std::span<const double> labels, const char* who) {
  if (scores.size() != labels.size()) throw InputError(std::string(who) + ": scores and labels differ in length");
  if (scores.empty()) throw InputError(std::string(who) + ": empty input");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw InputError(std::string(who) + ": non-finite score");
    if (labels[i] != 0.0 && labels[i] != 1.0) throw InputError(std::string(who) + ": labels must be 0 or 1");
  }
}

void require_both_classes(std::span<const double> labels, const char* who) {
  const double pos = std::accumulate(labels.begin(), labels.end(), 0.0);
  if (pos == 0.0 || pos == static_cast<double>(labels.size())) {
    throw DegenerateError(std::string(who) + ": needs both classes in the labels");
  }
}

std::vector<std::size_t> stable_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

// Equal-frequency partition of a sorted sequence: bin k holds sorted
// positions [k n / B, (k + 1) n / B). Returns edges (midpoints between bins)
// and the per-bin index ranges.
struct Partition {
  std::vector<double> edges;
  std::vector<std::size_t> starts;  // B + 1 entries
};

Partition equal_frequency(std::span<const double> scores, const std::vector<std::size_t>& order, std::size_t bins,
                          const char* who) {
  const std::size_t n = order.size();
  if (bins == 0) throw InputError(std::string(who) + ": bin count must be positive");
  if (n < bins) {
    throw InputError(std::string(who) + ": " + std::to_string(n) + " points cannot fill " + std::to_string(bins) +
                     " bins; use at most " + std::to_string(n) + " bins");
  }
  Partition p;
  p.starts.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) p.starts[k] = k * n / bins;
  p.edges.resize(bins + 1);
  p.edges.front() = scores[order.front()];
  p.edges.back() = scores[order.back()];
  for (std::size_t k = 1; k < bins; ++k) {
    p.edges[k] = 0.5 * (scores[order[p.starts[k] - 1]] + scores[order[p.starts[k]]]);
  }
  return p;
}

std::size_t locate(const std::vector<double>& edges, double score) {
  // Interior edges are edges[1..B-1]; a score equal to an edge goes up.
  const auto first = edges.begin() + 1;
  const auto last = edges.end() - 1;
  return static_cast<std::size_t>(std::upper_bound(first, last, score) - first);
}

double sigmoid(double z) { return LinkFunction::logistic().phi(z); }

}  // namespace

double PlattCalibrator::apply_one(double logit) const { return sigmoid(a * logit + b); }

std::vector<double> PlattCalibrator::apply(std::span<const double> logits) const {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = apply_one(logits[i]);
  return out;
}

PlattCalibrator fit_platt(std::span<const double> logits, std::span<const double> labels) {
  check_inputs(logits, labels, "fit_platt");
  require_both_classes(labels, "fit_platt");
  const std::size_t n = logits.size();
  const double n_pos = std::accumulate(labels.begin(), labels.end(), 0.0);
  const double n_neg = static_cast<double>(n) - n_pos;
  const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
  const double t_neg = 1.0 / (n_neg + 2.0);
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = labels[i] == 1.0 ? t_pos : t_neg;

  const auto [lo, hi] = std::minmax_element(logits.begin(), logits.end());
  if (*lo == *hi) {
    // Slope is unidentifiable; the offset matches the mean smoothed target.
    const double rate = (n_pos * t_pos + n_neg * t_neg) / static_cast<double>(n);
    return PlattCalibrator{0.0, std::log(rate) - std::log1p(-rate)};
  }

  auto loss = [&](double a, double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * logits[i] + b;
      // -[t log s(z) + (1 - t) log s(-z)] = softplus(z) - t z
      total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - target[i] * z;
    }
    return total;
  };

  double a = 0.0;
  double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double current = loss(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    double g_a = 0.0, g_b = 0.0, h_aa = 0.0, h_ab = 0.0, h_bb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(a * logits[i] + b);
      const double r = p - target[i];
      const double w = p * (1.0 - p);
      g_a += r * logits[i];
      g_b += r;
      h_aa += w * logits[i] * logits[i];
      h_ab += w * logits[i];
      h_bb += w;
    }
    h_aa += 1e-12;
    h_bb += 1e-12;
    const double det = h_aa * h_bb - h_ab * h_ab;
    double d_a = -(h_bb * g_a - h_ab * g_b) / det;
    double d_b = -(-h_ab * g_a + h_aa * g_b) / det;
    if (!std::isfinite(d_a) || !std::isfinite(d_b)) break;
    double scale = 1.0;
    double next = loss(a + d_a, b + d_b);
    while (next > current && scale > 1e-10) {
      scale *= 0.5;
      next = loss(a + scale * d_a, b + scale * d_b);
    }
    if (next > current) break;
    a += scale * d_a;
    b += scale * d_b;
    current = next;
    if (std::max(std::abs(scale * d_a), std::abs(scale * d_b)) < 1e-8) break;
  }
  return PlattCalibrator{a, b};
}

std::size_t HistogramCalibrator::bin_of(double score) const { return locate(edges, score); }

std::vector<double> HistogramCalibrator::apply(std::span<const double> scores) const {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = values[bin_of(scores[i])];
  return out;
}

HistogramCalibrator fit_histogram(std::span<const double> scores, std::span<const double> labels, std::size_t bins) {
  check_inputs(scores, labels, "fit_histogram");
  const auto order = stable_order(scores);
  const Partition part = equal_frequency(scores, order, bins, "fit_histogram");
  HistogramCalibrator cal;
  cal.edges = part.edges;
  cal.values.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double pos = 0.0;
    for (std::size_t s = part.starts[k]; s < part.starts[k + 1]; ++s) pos += labels[order[s]];
    cal.values[k] = pos / static_cast<double>(part.starts[k + 1] - part.starts[k]);
  }
  return cal;
}

double IsotonicCalibrator::apply_one(double score) const {
  const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), score);
  if (it == breakpoints.begin()) return values.front();
  return values[static_cast<std::size_t>(it - breakpoints.begin()) - 1];
}

std::vector<double> IsotonicCalibrator::apply(std::span<const double> scores) const {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = apply_one(scores[i]);
  return out;
}

IsotonicCalibrator fit_isotonic(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw InputError("fit_isotonic: scores and labels differ in length");
  if (scores.empty()) throw InputError("fit_isotonic: empty input");
  const auto order = stable_order(scores);

  struct Block {
    double sum;
    double weight;
    std::size_t first_level;  // index into the distinct-score list
  };
  IsotonicCalibrator cal;
  std::vector<Block> stack;
  for (std::size_t s = 0; s < order.size();) {
    const double level = scores[order[s]];
    double sum = 0.0, weight = 0.0;
    for (; s < order.size() && scores[order[s]] == level; ++s) {
      sum += labels[order[s]];
      weight += 1.0;
    }
    cal.breakpoints.push_back(level);
    stack.push_back({sum, weight, cal.breakpoints.size() - 1});
    while (stack.size() > 1) {
      const Block& top = stack.back();
      const Block& below = stack[stack.size() - 2];
      if (below.sum / below.weight <= top.sum / top.weight) break;
      const Block merged{below.sum + top.sum, below.weight + top.weight, below.first_level};
      stack.pop_back();
      stack.back() = merged;
    }
  }
  cal.values.resize(cal.breakpoints.size());
  for (std::size_t b = 0; b < stack.size(); ++b) {
    const std::size_t end = b + 1 < stack.size() ? stack[b + 1].first_level : cal.values.size();
    std::fill(cal.values.begin() + static_cast<std::ptrdiff_t>(stack[b].first_level),
              cal.values.begin() + static_cast<std::ptrdiff_t>(end), stack[b].sum / stack[b].weight);
  }
  return cal;
}

std::vector<double> ScalingBinningCalibrator::apply(std::span<const double> logits) const {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = values[locate(edges, platt.apply_one(logits[i]))];
  return out;
}

ScalingBinningCalibrator fit_scaling_binning(std::span<const double> logits, std::span<const double> labels,
                                             std::size_t bins) {
  check_inputs(logits, labels, "fit_scaling_binning");
  if (logits.size() < bins) {
    throw InputError("fit_scaling_binning: " + std::to_string(logits.size()) + " points cannot fill " +
                     std::to_string(bins) + " bins");
  }
  ScalingBinningCalibrator cal;
  cal.platt = fit_platt(logits, labels);
  const std::vector<double> scaled = cal.platt.apply(logits);
  const auto order = stable_order(scaled);
  const Partition part = equal_frequency(scaled, order, bins, "fit_scaling_binning");
  cal.edges = part.edges;
  cal.values.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double sum = 0.0;
    for (std::size_t s = part.starts[k]; s < part.starts[k + 1]; ++s) sum += scaled[order[s]];
    cal.values[k] = sum / static_cast<double>(part.starts[k + 1] - part.starts[k]);
  }
  return cal;
}

std::string_view kind_name(const Calibrator& c) {
  struct Visitor {
    std::string_view operator()(const PlattCalibrator&) const { return "platt"; }
    std::string_view operator()(const HistogramCalibrator&) const { return "histogram"; }
    std::string_view operator()(const IsotonicCalibrator&) const { return "isotonic"; }
    std::string_view operator()(const ScalingBinningCalibrator&) const { return "scaling_binning"; }
  };
  return std::visit(Visitor{}, c);
}

std::vector<double> apply(const Calibrator& c, std::span<const double> scores) {
  std::vector<double> out = std::visit([&](const auto& cal) { return cal.apply(scores); }, c);
  for (double& p : out) p = clamp_probability(p);
  return out;
}

nlohmann::json to_json(const Calibrator& c) {
  struct Visitor {
    nlohmann::json operator()(const PlattCalibrator& p) const { return {{"kind", "platt"}, {"a", p.a}, {"b", p.b}}; }
    nlohmann::json operator()(const HistogramCalibrator& h) const {
      return {{"kind", "histogram"}, {"edges", h.edges}, {"values", h.values}};
    }
    nlohmann::json operator()(const IsotonicCalibrator& i) const {
      return {{"kind", "isotonic"}, {"breakpoints", i.breakpoints}, {"values", i.values}};
    }
    nlohmann::json operator()(const ScalingBinningCalibrator& s) const {
      return {{"kind", "scaling_binning"},
              {"platt", {{"a", s.platt.a}, {"b", s.platt.b}}},
              {"edges", s.edges},
              {"values", s.values}};
    }
  };
  return std::visit(Visitor{}, c);
}

Calibrator calibrator_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "platt") return PlattCalibrator{j.at("a").get<double>(), j.at("b").get<double>()};
    if (kind == "histogram") {
      HistogramCalibrator h{j.at("edges").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
      if (h.values.empty() || h.edges.size() != h.values.size() + 1) throw DataError("histogram: bad edge count");
      return h;
    }
    if (kind == "isotonic") {
      IsotonicCalibrator i{j.at("breakpoints").get<std::vector<double>>(), j.at("values").get<std::vector<double>>()};
      if (i.values.empty() || i.values.size() != i.breakpoints.size()) throw DataError("isotonic: size mismatch");
      return i;
    }
    if (kind == "scaling_binning") {
      ScalingBinningCalibrator s;
      s.platt = PlattCalibrator{j.at("platt").at("a").get<double>(), j.at("platt").at("b").get<double>()};
      s.edges = j.at("edges").get<std::vector<double>>();
      s.values = j.at("values").get<std::vector<double>>();
      if (s.values.empty() || s.edges.size() != s.values.size() + 1) throw DataError("scaling_binning: bad edge count");
      return s;
    }
    throw DataError("unknown calibrator kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("calibrator json: ") + e.what());
  }
}

}  // namespace vadcal::calib
