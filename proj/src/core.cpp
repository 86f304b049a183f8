#include "vadcal/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>

namespace vadcal {

namespace {

std::mutex g_warn_mutex;
std::atomic<bool> g_warnings_enabled{true};

// Stable logistic: never evaluates exp of a large positive argument.
double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

void warn(std::string_view msg) {
  if (!g_warnings_enabled.load()) return;
  std::lock_guard lock(g_warn_mutex);
  std::cerr << "warning: " << msg << '\n';
}

ScopedWarningSilencer::ScopedWarningSilencer() : previous_(g_warnings_enabled.exchange(false)) {}
ScopedWarningSilencer::~ScopedWarningSilencer() { g_warnings_enabled.store(previous_); }

Probability::Probability(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) {
    throw InputError("probability out of [0, 1]: " + std::to_string(p));
  }
  *this = from_pair(p, 1.0 - p);
}

Probability Probability::clamped(double p) {
  if (std::isnan(p)) throw InputError("probability is NaN");
  return from_pair(p, 1.0 - p);
}

Probability Probability::from_pair(double p, double complement) {
  constexpr double lo = kProbabilityEpsilon;
  constexpr double hi = 1.0 - kProbabilityEpsilon;
  if (p < lo || complement > hi) return Probability(lo, hi, 0);
  if (complement < lo || p > hi) return Probability(hi, lo, 0);
  return Probability(p, complement, 0);
}

double clamp_probability(double p) {
  if (std::isnan(p)) throw InputError("probability is NaN");
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

std::string_view LinkFunction::name() const noexcept {
  return kind_ == LinkKind::Logistic ? "logistic" : "identity";
}

double LinkFunction::phi(double t) const noexcept {
  return kind_ == LinkKind::Logistic ? sigmoid(t) : t;
}

double LinkFunction::phi_inverse(double p) const noexcept {
  if (kind_ == LinkKind::Identity) return p;
  return std::log(p) - std::log1p(-p);
}

double LinkFunction::phi_derivative(double t) const noexcept {
  if (kind_ == LinkKind::Identity) return 1.0;
  const double s = sigmoid(t);
  return s * sigmoid(-t);
}

double LinkFunction::phi_derivative_bound() const noexcept {
  return kind_ == LinkKind::Logistic ? 0.25 : 1.0;
}

LinkFunction link_from_name(std::string_view name) {
  if (name == "logistic") return LinkFunction::logistic();
  if (name == "identity") return LinkFunction::identity();
  throw ConfigError("unknown link function '" + std::string(name) + "' (expected logistic|identity)");
}

Probability phi_eval(LinkFunction link, double t) {
  if (!std::isfinite(t)) throw InputError("phi_eval: non-finite score");
  if (link.kind() == LinkKind::Logistic) return Probability::from_pair(sigmoid(t), sigmoid(-t));
  return Probability::clamped(t);
}

double phi_inverse_eval(LinkFunction link, Probability p) {
  if (link.kind() == LinkKind::Identity) return p.value();
  return std::log(p.value()) - std::log(p.complement());
}

double phi_inverse_eval(LinkFunction link, double p) { return phi_inverse_eval(link, Probability(p)); }

std::vector<double> apply_link(LinkFunction link, std::span<const double> scores) {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = phi_eval(link, scores[i]).value();
  return out;
}

std::vector<double> inverse_link(LinkFunction link, std::span<const double> probs) {
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out[i] = phi_inverse_eval(link, Probability::clamped(probs[i]));
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(parent) ^ splitmix64(stream + 0xD1B54A32D192ED03ULL));
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * factor;
  return u * factor;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InputError("Rng::index: empty range");
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return static_cast<std::size_t>(x % bound);
  }
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace vadcal
