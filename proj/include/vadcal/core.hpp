#pragma once

// Shared domain types: error hierarchy, link functions, clamped probabilities
// and the seeded random source used by every other module.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vadcal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments to a library call (non-finite input, out-of-range alpha, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent configuration. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files or data that cannot support the requested fit.
class DataError : public Error {
 public:
  using Error::Error;
};

// Data is well-formed but degenerate: single-class labels, zero variance.
class DegenerateError : public DataError {
 public:
  using DataError::DataError;
};

// A metric is undefined on the given rows (e.g. calibration error with no
// positives). Reported as missing in tables rather than aborting a run.
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

// Writes "warning: <msg>" to stderr. Thread-safe.
void warn(std::string_view msg);

// Silences warn() for the lifetime of the guard (used by tests).
class ScopedWarningSilencer {
 public:
  ScopedWarningSilencer();
  ~ScopedWarningSilencer();
  ScopedWarningSilencer(const ScopedWarningSilencer&) = delete;
  ScopedWarningSilencer& operator=(const ScopedWarningSilencer&) = delete;

 private:
  bool previous_;
};

inline constexpr double kProbabilityEpsilon = 1e-12;

// A probability held in [eps, 1 - eps]. The complement is stored separately
// so that logits near the upper clamp survive a round trip.
class Probability {
 public:
  // Throws InputError when p is NaN or outside [0, 1]; clamps otherwise.
  explicit Probability(double p);

  // Saturating construction: anything non-NaN is pushed into range.
  static Probability clamped(double p);
  // Builds from an explicit (p, 1 - p) pair computed independently.
  static Probability from_pair(double p, double complement);

  double value() const noexcept { return value_; }
  double complement() const noexcept { return complement_; }
  operator double() const noexcept { return value_; }  // NOLINT

 private:
  Probability(double p, double q, int) : value_(p), complement_(q) {}
  double value_;
  double complement_;
};

// Clamps into [eps, 1 - eps]; NaN is rejected with InputError.
double clamp_probability(double p);

enum class LinkKind { Logistic, Identity };

// phi maps scores to probabilities; phi_inverse maps back to score space.
class LinkFunction {
 public:
  constexpr LinkFunction() = default;
  constexpr explicit LinkFunction(LinkKind kind) : kind_(kind) {}

  static constexpr LinkFunction logistic() { return LinkFunction(LinkKind::Logistic); }
  static constexpr LinkFunction identity() { return LinkFunction(LinkKind::Identity); }

  constexpr LinkKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept;

  // Raw (unclamped) maps.
  double phi(double t) const noexcept;
  double phi_inverse(double p) const noexcept;
  double phi_derivative(double t) const noexcept;
  // Supremum of phi' over the real line.
  double phi_derivative_bound() const noexcept;

  friend constexpr bool operator==(LinkFunction a, LinkFunction b) { return a.kind_ == b.kind_; }

 private:
  LinkKind kind_ = LinkKind::Logistic;
};

// Accepts "logistic" or "identity".
LinkFunction link_from_name(std::string_view name);

// phi(t) clamped into the Probability range. Non-finite t is an InputError.
Probability phi_eval(LinkFunction link, double t);
// Exact inverse of phi_eval on the clamped range.
double phi_inverse_eval(LinkFunction link, Probability p);
// Convenience overload; p outside [0, 1] is an InputError.
double phi_inverse_eval(LinkFunction link, double p);

// Pointwise phi_eval over a score vector.
std::vector<double> apply_link(LinkFunction link, std::span<const double> scores);
// Pointwise phi_inverse_eval over clamped probabilities.
std::vector<double> inverse_link(LinkFunction link, std::span<const double> probs);

// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept;

// Seeded random source. The engine is std::mt19937_64 (bit-exact across
// standard libraries); every transform below is implemented here rather than
// via <random> distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Standard normal (Marsaglia polar method).
  double normal();
  bool bernoulli(double p);
  // Uniform integer in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  // Independent stream derived from (seed, stream); does not advance *this.
  Rng child(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

// Fisher-Yates shuffle of 0..n-1 driven by rng.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace vadcal
