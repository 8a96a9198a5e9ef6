#include "tailmc/numeric.hpp"

#include <cmath>
#include <limits>

#include "tailmc/error.hpp"

namespace tailmc {

std::uint64_t SeededStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  // Largest multiple of n that fits, minus one; draws above it are biased.
  const std::uint64_t limit = kMax - (kMax % n + 1) % n;
  std::uint64_t x = engine_();
  while (x > limit) x = engine_();
  return x % n;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

double sigmoid_rank_value(double f_min, std::size_t rank, double steepness,
                          double midpoint) {
  return static_cast<double>(rank) /
         (1.0 + std::exp(-steepness * (f_min - midpoint)));
}

ActiveRankCount sigmoid_rank_count(double f_min, std::size_t rank,
                                   double steepness, double midpoint) {
  if (rank == 0) throw InvalidArgument("sigmoid_rank_count: rank must be >= 1");
  const double raw = sigmoid_rank_value(f_min, rank, steepness, midpoint);
  const auto rounded = static_cast<std::size_t>(std::llround(raw));
  return {std::clamp<std::size_t>(rounded, 1, rank)};
}

namespace {

std::uint64_t poisson_knuth(double lambda, SeededStream& stream) {
  const double limit = std::exp(-lambda);
  std::uint64_t x = 0;
  double prod = stream.uniform01();
  while (prod > limit) {
    ++x;
    prod *= stream.uniform01();
  }
  return x;
}

// PTRS, W. Hormann, "The transformed rejection method for generating Poisson
// random variables", Insurance: Mathematics and Economics 12 (1993).
std::uint64_t poisson_ptrs(double lambda, SeededStream& stream) {
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);

  while (true) {
    const double u = stream.uniform01() - 0.5;
    const double v = stream.uniform01();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    const double lhs = std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b);
    const double rhs = -lambda + k * loglam - std::lgamma(k + 1.0);
    if (lhs <= rhs) return static_cast<std::uint64_t>(k);
  }
}

}  // namespace

std::uint64_t poisson_sample(double lambda, SeededStream& stream) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("poisson_sample: lambda must be positive and finite");
  }
  return lambda <= 30.0 ? poisson_knuth(lambda, stream)
                        : poisson_ptrs(lambda, stream);
}

std::uint64_t poisson_cdf_cutoff(double lambda, double epsilon) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("poisson_cdf_cutoff: lambda must be positive and finite");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("poisson_cdf_cutoff: epsilon must lie in (0, 1)");
  }
  const double target = 1.0 - epsilon;
  const double log_lambda = std::log(lambda);
  double log_term = -lambda;
  double cdf = std::exp(log_term);
  std::uint64_t s = 0;
  while (cdf < target) {
    ++s;
    log_term += log_lambda - std::log(static_cast<double>(s));
    const double term = std::exp(log_term);
    cdf += term;
    // Past the mode with nothing left to add: rounding kept cdf below target.
    if (static_cast<double>(s) > lambda && term < cdf * 1e-17) break;
  }
  return s;
}

double inverse_frequency_weight(double f_min, double rho) {
  if (rho < 0.0) throw InvalidArgument("inverse_frequency_weight: rho must be >= 0");
  return 1.0 / (1.0 + rho * f_min);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t j = 0; j < n; ++j) sum += a[j] * b[j];
  return sum;
}

}  // namespace tailmc
