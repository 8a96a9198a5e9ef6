#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace tailmc {

// Deterministic random stream.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are implementation-defined, so every
// conversion from raw 64-bit words (uniform reals, bounded integers,
// shuffles) is done here with documented arithmetic. The same seed therefore
// produces the same values with any conforming standard library.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Top 53 bits scaled to [0, 1).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection of the incomplete final block.
  std::uint64_t uniform_index(std::uint64_t n);

  // Unbiased integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return lo + uniform_index(hi - lo + 1);
  }

  // Stream for a concurrent worker: seed XOR worker index.
  SeededStream split(std::uint64_t worker) const {
    return SeededStream(seed_ ^ worker);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Fisher-Yates, walking from the back.
template <typename T>
void shuffle(std::span<T> values, SeededStream& stream) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.uniform_index(i));
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

// Row-major dense matrix. Used for latent factors (rows x rank) and for full
// synthetic rating matrices (n x m).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

using DenseFactor = Matrix;
using FullMatrix = Matrix;

// Number of active latent coordinates for one (user, item) pair; 1 <= value <= rank.
struct ActiveRankCount {
  std::size_t value;
  friend bool operator==(ActiveRankCount, ActiveRankCount) = default;
};

// Unrounded sigmoid r / (1 + exp(-k (f_min - z))). Also the Poisson mean used
// by the dropout variant.
double sigmoid_rank_value(double f_min, std::size_t rank, double steepness,
                          double midpoint);

// sigmoid_rank_value rounded to nearest and clamped into [1, rank].
ActiveRankCount sigmoid_rank_count(double f_min, std::size_t rank,
                                   double steepness, double midpoint);

// One Poisson(lambda) draw. Knuth's product method for lambda <= 30,
// Hormann's transformed rejection (PTRS) above that. Throws on lambda <= 0.
std::uint64_t poisson_sample(double lambda, SeededStream& stream);

// Smallest s with P(X <= s) >= 1 - epsilon for X ~ Poisson(lambda). Terms are
// accumulated in log space so large lambda does not underflow.
std::uint64_t poisson_cdf_cutoff(double lambda, double epsilon);

inline constexpr double kDefaultCdfEpsilon = 1e-6;

// 1 / (1 + rho * f_min).
double inverse_frequency_weight(double f_min, double rho);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace tailmc
