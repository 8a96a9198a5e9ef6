#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tailmc {

// Dense indices into a dataset's user and item identifier tables. Kept as
// distinct types so a (user, item) pair cannot be passed in swapped order.
enum class UserIdx : std::uint32_t {};
enum class ItemIdx : std::uint32_t {};

constexpr std::size_t index_of(UserIdx u) noexcept { return static_cast<std::size_t>(u); }
constexpr std::size_t index_of(ItemIdx i) noexcept { return static_cast<std::size_t>(i); }

// Identifier <-> dense index table for one entity class. Indices are assigned
// in order of first appearance.
class EntityIndex {
 public:
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }

  // Index of `name`, registering it if unseen.
  std::uint32_t intern(std::string_view name);
  // Index of `name` or -1 when absent.
  std::int64_t find(std::string_view name) const;

  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> lookup_;
};

struct RatingTriple {
  UserIdx user;
  ItemIdx item;
  double rating;
  friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

// Observed ratings plus the identifier tables they index into. Splits share
// the tables of their parent so entity indices agree across train/val/test.
class RatingDataset {
 public:
  RatingDataset();
  RatingDataset(std::shared_ptr<const EntityIndex> users,
                std::shared_ptr<const EntityIndex> items,
                std::vector<RatingTriple> triples);

  std::size_t n_users() const noexcept { return users_->size(); }
  std::size_t n_items() const noexcept { return items_->size(); }
  std::size_t size() const noexcept { return triples_.size(); }
  bool empty() const noexcept { return triples_.empty(); }

  const std::vector<RatingTriple>& triples() const noexcept { return triples_; }
  const EntityIndex& users() const noexcept { return *users_; }
  const EntityIndex& items() const noexcept { return *items_; }
  const std::shared_ptr<const EntityIndex>& user_index() const noexcept { return users_; }
  const std::shared_ptr<const EntityIndex>& item_index() const noexcept { return items_; }

  const std::string& user_name(UserIdx u) const { return users_->name(index_of(u)); }
  const std::string& item_name(ItemIdx i) const { return items_->name(index_of(i)); }

  // Same tables, different triples.
  RatingDataset with_triples(std::vector<RatingTriple> triples) const;

  double mean_rating() const;

 private:
  std::shared_ptr<const EntityIndex> users_;
  std::shared_ptr<const EntityIndex> items_;
  std::vector<RatingTriple> triples_;
};

// Accumulates (user, item, rating) observations by identifier, enforcing
// finite ratings and unique pairs.
class DatasetBuilder {
 public:
  // `line` is reported in errors; pass 0 when there is no source line.
  void add(std::string_view user, std::string_view item, double rating,
           std::size_t line = 0);
  std::size_t size() const noexcept { return triples_.size(); }
  RatingDataset build() &&;

 private:
  std::shared_ptr<EntityIndex> users_ = std::make_shared<EntityIndex>();
  std::shared_ptr<EntityIndex> items_ = std::make_shared<EntityIndex>();
  std::vector<RatingTriple> triples_;
  std::unordered_map<std::uint64_t, std::size_t> seen_pairs_;
};

// Reads `user<sep>item<sep>rating` lines; the separator (tab or comma) is
// detected from the first data line. Blank lines and lines starting with '#'
// are skipped.
RatingDataset load_ratings(const std::filesystem::path& path);
RatingDataset parse_ratings(std::string_view text);

void write_ratings(const std::filesystem::path& path, const RatingDataset& ds,
                   char separator = ',');

struct FrequencyTable {
  std::vector<std::size_t> user_freq;
  std::vector<std::size_t> item_freq;
  std::vector<double> user_norm;  // count / max user count
  std::vector<double> item_norm;  // count / max item count
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;

  std::size_t n_users() const noexcept { return user_freq.size(); }
  std::size_t n_items() const noexcept { return item_freq.size(); }

  std::size_t user_count(UserIdx u) const { return user_freq.at(index_of(u)); }
  std::size_t item_count(ItemIdx i) const { return item_freq.at(index_of(i)); }
  // Normalized min(f_u, f_i), the input to truncation and weighting.
  double min_norm(UserIdx u, ItemIdx i) const;
};

// Counts over the dataset's full identifier tables; entities with no ratings
// in `ds` get count 0.
FrequencyTable compute_frequencies(const RatingDataset& ds);

enum class Quartile : std::uint8_t { Q1 = 0, Q2 = 1, Q3 = 2, Q4 = 3 };
constexpr std::size_t kQuartiles = 4;

constexpr std::size_t index_of(Quartile q) noexcept { return static_cast<std::size_t>(q); }
std::string_view quartile_name(Quartile q);

struct QuartileMap {
  std::vector<Quartile> user_quartile;
  std::vector<Quartile> item_quartile;
  std::vector<std::string> warnings;

  Quartile of(UserIdx u) const { return user_quartile.at(index_of(u)); }
  Quartile of(ItemIdx i) const { return item_quartile.at(index_of(i)); }
};

// Splits `counts` (with identifier tie-break) into four ascending groups
// whose sizes differ by at most one, remainder to the lowest quartiles.
// Entities with count 0 are left out of the partition and labeled Q1.
std::vector<Quartile> quartiles_of(const std::vector<std::size_t>& counts,
                                   const std::vector<std::string>& names,
                                   std::vector<std::string>* warnings = nullptr,
                                   std::string_view label = "entity");

QuartileMap assign_quartiles(const FrequencyTable& freq);

struct DatasetSplit {
  RatingDataset train;
  RatingDataset validation;
  RatingDataset test;
};

DatasetSplit split(const RatingDataset& ds, double val_frac, double test_frac,
                   std::uint64_t seed);

// Two-phase skewed down-sampling: per user keep a uniform count in
// [1, f_u] of their ratings, then per item keep a uniform count in
// [1, current f_i] of the survivors. A user emptied by the second phase gets
// one of its first-phase ratings back. Identifier tables are rebuilt from the
// surviving triples.
RatingDataset skewed_subsample(const RatingDataset& ds, std::uint64_t seed);

}  // namespace tailmc
