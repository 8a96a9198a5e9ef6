#pragma once

#include <cstddef>
#include <cstdint>

#include "tailmc/data.hpp"
#include "tailmc/numeric.hpp"

namespace tailmc {

// Orthonormal basis (rows x rank) of the column space of a rows x rank draw
// with entries uniform in [0, 1]. Orthonormalization is modified Gram-Schmidt
// with one reorthogonalization pass. A numerically rank-deficient draw is
// redrawn with a perturbed seed, at most five times.
DenseFactor orthonormal_factor(std::size_t rows, std::size_t rank, std::uint64_t seed);

// The raw uniform draw orthonormal_factor starts from for a given attempt.
DenseFactor uniform_draw(std::size_t rows, std::size_t rank, std::uint64_t seed);

struct LowRankFactors {
  DenseFactor users;  // alpha * U_A, n x r
  DenseFactor items;  // alpha * U_B, m x r
  double alpha = 0.0;
};

// Exact-rank factors whose product has max |entry| equal to 10:
// alpha = sqrt(10 / max |U_A U_B^T|).
LowRankFactors generate_lowrank(std::size_t n, std::size_t m, std::size_t rank,
                                std::uint64_t seed);

inline constexpr double kRatingScale = 10.0;

// users * items^T.
FullMatrix dense_product(const DenseFactor& users, const DenseFactor& items);

// Dataset of full's values at the positions of `pattern`. The pattern's user
// and item identifiers must be "u<row>" and "i<col>" (as written by
// dense_pattern/uniform_mask) or plain non-negative integers.
RatingDataset apply_mask(const FullMatrix& full, const RatingDataset& pattern);

// Every (user, item) pair of observed's identifier tables that observed does
// not rate, valued from the full matrix. Same tables as observed.
RatingDataset unobserved_entries(const FullMatrix& full, const RatingDataset& observed);

// Dataset of full's values at round(density * n * m) positions drawn
// uniformly without replacement, emitted in row-major order.
RatingDataset apply_mask(const FullMatrix& full, double density, std::uint64_t seed);

// Every (row, col) position of an n x m matrix with rating 0.
RatingDataset dense_pattern(std::size_t n, std::size_t m);

std::string synthetic_user_name(std::size_t row);
std::string synthetic_item_name(std::size_t col);

}  // namespace tailmc
