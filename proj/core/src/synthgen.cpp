#include "tailmc/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "tailmc/error.hpp"

namespace tailmc {

namespace {

constexpr int kMaxRetries = 5;
constexpr double kDeficiencyTolerance = 1e-10;
constexpr std::uint64_t kRetryMix = 0xD1B54A32D192ED03ULL;
constexpr std::uint64_t kItemSeedMix = 0x9E3779B97F4A7C15ULL;

double column_norm(const Matrix& a, std::size_t col) {
  double sum = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) sum += a(r, col) * a(r, col);
  return std::sqrt(sum);
}

// Returns false when a column collapses under orthogonalization.
bool gram_schmidt(Matrix& a) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    const double original = column_norm(a, j);
    if (original == 0.0) return false;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t r = 0; r < a.rows(); ++r) proj += a(r, k) * a(r, j);
        for (std::size_t r = 0; r < a.rows(); ++r) a(r, j) -= proj * a(r, k);
      }
    }
    const double norm = column_norm(a, j);
    if (norm < kDeficiencyTolerance * original) return false;
    for (std::size_t r = 0; r < a.rows(); ++r) a(r, j) /= norm;
  }
  return true;
}

std::size_t parse_position(const std::string& name, char prefix, std::size_t limit) {
  std::string_view digits = name;
  if (!digits.empty() && digits.front() == prefix) digits.remove_prefix(1);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw InvalidArgument("apply_mask: identifier '" + name + "' is not a matrix position");
  }
  if (value >= limit) {
    throw InvalidArgument("apply_mask: identifier '" + name + "' lies outside the " +
                          std::to_string(limit) + "-entry dimension");
  }
  return value;
}

}  // namespace

DenseFactor uniform_draw(std::size_t rows, std::size_t rank, std::uint64_t seed) {
  SeededStream stream(seed);
  DenseFactor a(rows, rank);
  for (auto& v : a.values()) v = stream.uniform01();
  return a;
}

DenseFactor orthonormal_factor(std::size_t rows, std::size_t rank, std::uint64_t seed) {
  if (rank == 0) throw InvalidArgument("orthonormal_factor: rank must be >= 1");
  if (rank > rows) throw InvalidArgument("orthonormal_factor: rank exceeds rows");
  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    auto a = uniform_draw(rows, rank, seed ^ (static_cast<std::uint64_t>(attempt) * kRetryMix));
    if (gram_schmidt(a)) return a;
  }
  throw Error("degenerate", "orthonormal_factor: draw stayed rank-deficient after retries");
}

FullMatrix dense_product(const DenseFactor& users, const DenseFactor& items) {
  if (users.cols() != items.cols()) throw InvalidArgument("dense_product: rank mismatch");
  FullMatrix out(users.rows(), items.rows());
  for (std::size_t u = 0; u < users.rows(); ++u) {
    for (std::size_t i = 0; i < items.rows(); ++i) {
      out(u, i) = dot(users.row(u), items.row(i));
    }
  }
  return out;
}

LowRankFactors generate_lowrank(std::size_t n, std::size_t m, std::size_t rank,
                                std::uint64_t seed) {
  if (rank > std::min(n, m)) throw InvalidArgument("generate_lowrank: rank exceeds min(n, m)");
  LowRankFactors f;
  f.users = orthonormal_factor(n, rank, seed);
  f.items = orthonormal_factor(m, rank, seed ^ kItemSeedMix);
  const auto base = dense_product(f.users, f.items);
  double max_abs = 0.0;
  for (double v : base.values()) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0) throw Error("degenerate", "generate_lowrank: zero product");
  f.alpha = std::sqrt(kRatingScale / max_abs);
  for (auto& v : f.users.values()) v *= f.alpha;
  for (auto& v : f.items.values()) v *= f.alpha;
  return f;
}

std::string synthetic_user_name(std::size_t row) { return "u" + std::to_string(row); }
std::string synthetic_item_name(std::size_t col) { return "i" + std::to_string(col); }

RatingDataset apply_mask(const FullMatrix& full, const RatingDataset& pattern) {
  std::vector<std::size_t> rows(pattern.n_users());
  std::vector<std::size_t> cols(pattern.n_items());
  for (std::size_t u = 0; u < rows.size(); ++u) {
    rows[u] = parse_position(pattern.users().name(u), 'u', full.rows());
  }
  for (std::size_t i = 0; i < cols.size(); ++i) {
    cols[i] = parse_position(pattern.items().name(i), 'i', full.cols());
  }
  std::vector<RatingTriple> triples;
  triples.reserve(pattern.size());
  for (const auto& t : pattern.triples()) {
    triples.push_back({t.user, t.item, full(rows[index_of(t.user)], cols[index_of(t.item)])});
  }
  return pattern.with_triples(std::move(triples));
}

RatingDataset unobserved_entries(const FullMatrix& full, const RatingDataset& observed) {
  std::vector<std::size_t> rows(observed.n_users());
  std::vector<std::size_t> cols(observed.n_items());
  for (std::size_t u = 0; u < rows.size(); ++u) {
    rows[u] = parse_position(observed.users().name(u), 'u', full.rows());
  }
  for (std::size_t i = 0; i < cols.size(); ++i) {
    cols[i] = parse_position(observed.items().name(i), 'i', full.cols());
  }
  std::vector<std::uint8_t> seen(rows.size() * cols.size(), 0);
  for (const auto& t : observed.triples()) seen[index_of(t.user) * cols.size() + index_of(t.item)] = 1;
  std::vector<RatingTriple> triples;
  for (std::size_t u = 0; u < rows.size(); ++u) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (seen[u * cols.size() + i]) continue;
      triples.push_back({UserIdx{static_cast<std::uint32_t>(u)}, ItemIdx{static_cast<std::uint32_t>(i)},
                         full(rows[u], cols[i])});
    }
  }
  return observed.with_triples(std::move(triples));
}

RatingDataset apply_mask(const FullMatrix& full, double density, std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0)) {
    throw InvalidArgument("apply_mask: density must lie in (0, 1]");
  }
  const std::size_t total = full.rows() * full.cols();
  const auto wanted = std::min<std::size_t>(
      total, static_cast<std::size_t>(std::llround(density * static_cast<double>(total))));
  SeededStream stream(seed);
  DatasetBuilder builder;
  // Selection sampling: position t is taken with probability
  // (still needed) / (still available).
  std::size_t taken = 0;
  for (std::size_t t = 0; t < total && taken < wanted; ++t) {
    const std::size_t remaining = total - t;
    if (stream.uniform_index(remaining) < wanted - taken) {
      const std::size_t r = t / full.cols();
      const std::size_t c = t % full.cols();
      builder.add(synthetic_user_name(r), synthetic_item_name(c), full(r, c));
      ++taken;
    }
  }
  return std::move(builder).build();
}

RatingDataset dense_pattern(std::size_t n, std::size_t m) {
  DatasetBuilder builder;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      builder.add(synthetic_user_name(r), synthetic_item_name(c), 0.0);
    }
  }
  return std::move(builder).build();
}

}  // namespace tailmc
