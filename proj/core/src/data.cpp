#include "tailmc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "tailmc/error.hpp"
#include "tailmc/numeric.hpp"

namespace tailmc {

std::uint32_t EntityIndex::intern(std::string_view name) {
  auto it = lookup_.find(std::string(name));
  if (it != lookup_.end()) return it->second;
  const auto index = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  lookup_.emplace(names_.back(), index);
  return index;
}

std::int64_t EntityIndex::find(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  return it == lookup_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

RatingDataset::RatingDataset()
    : users_(std::make_shared<EntityIndex>()),
      items_(std::make_shared<EntityIndex>()) {}

RatingDataset::RatingDataset(std::shared_ptr<const EntityIndex> users,
                             std::shared_ptr<const EntityIndex> items,
                             std::vector<RatingTriple> triples)
    : users_(std::move(users)), items_(std::move(items)), triples_(std::move(triples)) {
  for (const auto& t : triples_) {
    if (index_of(t.user) >= users_->size() || index_of(t.item) >= items_->size()) {
      throw InvalidArgument("rating references an entity outside the index tables");
    }
  }
}

RatingDataset RatingDataset::with_triples(std::vector<RatingTriple> triples) const {
  return RatingDataset(users_, items_, std::move(triples));
}

double RatingDataset::mean_rating() const {
  if (triples_.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : triples_) sum += t.rating;
  return sum / static_cast<double>(triples_.size());
}

void DatasetBuilder::add(std::string_view user, std::string_view item,
                         double rating, std::size_t line) {
  if (!std::isfinite(rating)) {
    throw ParseError(line, "rating is not finite");
  }
  const auto u = users_->intern(user);
  const auto i = items_->intern(item);
  const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | i;
  if (!seen_pairs_.emplace(key, triples_.size()).second) {
    throw DuplicateRating(line, std::string(user), std::string(item));
  }
  triples_.push_back({UserIdx{u}, ItemIdx{i}, rating});
}

RatingDataset DatasetBuilder::build() && {
  return RatingDataset(std::move(users_), std::move(items_), std::move(triples_));
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool is_skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

RatingDataset parse_ratings(std::string_view text) {
  DatasetBuilder builder;
  char separator = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_skippable(line)) {
      if (end == text.size()) break;
      continue;
    }
    if (separator == 0) separator = line.find('\t') != std::string_view::npos ? '\t' : ',';

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto cut = line.find(separator, start);
      if (cut == std::string_view::npos) {
        fields.push_back(trim(line.substr(start)));
        break;
      }
      fields.push_back(trim(line.substr(start, cut - start)));
      start = cut + 1;
    }
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 fields separated by '" +
                                    std::string(separator == '\t' ? "\\t" : ",") + "'");
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(line_no, "empty user or item identifier");
    }
    double rating = 0.0;
    const auto* first = fields[2].data();
    const auto* last = first + fields[2].size();
    if (!fields[2].empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, rating);
    if (fields[2].empty() || ec != std::errc() || ptr != last) {
      throw ParseError(line_no, "rating '" + std::string(fields[2]) + "' is not a number");
    }
    builder.add(fields[0], fields[1], rating, line_no);
    if (end == text.size()) break;
  }
  if (builder.size() == 0) throw ParseError(line_no, "no ratings found");
  return std::move(builder).build();
}

RatingDataset load_ratings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ratings file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_ratings(buffer.str());
}

namespace {

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

void write_ratings(const std::filesystem::path& path, const RatingDataset& ds,
                   char separator) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write ratings file " + path.string());
  for (const auto& t : ds.triples()) {
    out << ds.user_name(t.user) << separator << ds.item_name(t.item) << separator
        << format_real(t.rating) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

double FrequencyTable::min_norm(UserIdx u, ItemIdx i) const {
  return std::min(user_norm.at(index_of(u)), item_norm.at(index_of(i)));
}

namespace {

std::vector<double> normalize(const std::vector<std::size_t>& counts) {
  const std::size_t max = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  std::vector<double> norm(counts.size(), 0.0);
  if (max == 0) return norm;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    norm[k] = static_cast<double>(counts[k]) / static_cast<double>(max);
  }
  return norm;
}

}  // namespace

FrequencyTable compute_frequencies(const RatingDataset& ds) {
  if (ds.empty()) throw InvalidArgument("compute_frequencies: empty dataset");
  FrequencyTable freq;
  freq.user_freq.assign(ds.n_users(), 0);
  freq.item_freq.assign(ds.n_items(), 0);
  for (const auto& t : ds.triples()) {
    ++freq.user_freq[index_of(t.user)];
    ++freq.item_freq[index_of(t.item)];
  }
  freq.user_norm = normalize(freq.user_freq);
  freq.item_norm = normalize(freq.item_freq);
  freq.user_names = ds.users().names();
  freq.item_names = ds.items().names();
  return freq;
}

std::string_view quartile_name(Quartile q) {
  static constexpr std::array<std::string_view, kQuartiles> kNames{"Q1", "Q2", "Q3", "Q4"};
  return kNames[index_of(q)];
}

std::vector<Quartile> quartiles_of(const std::vector<std::size_t>& counts,
                                   const std::vector<std::string>& names,
                                   std::vector<std::string>* warnings,
                                   std::string_view label) {
  std::vector<Quartile> out(counts.size(), Quartile::Q1);
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0) order.push_back(k);
  }
  if (order.size() < kQuartiles) {
    const auto msg = fmt::format("fewer than 4 {}s with ratings ({}); all labeled Q1",
                                 label, order.size());
    spdlog::warn(msg);
    if (warnings) warnings->push_back(msg);
    return out;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (counts[a] != counts[b]) return counts[a] < counts[b];
    if (names[a] != names[b]) return names[a] < names[b];
    return a < b;
  });
  const std::size_t base = order.size() / kQuartiles;
  const std::size_t extra = order.size() % kQuartiles;
  std::size_t pos = 0;
  for (std::size_t q = 0; q < kQuartiles; ++q) {
    const std::size_t group = base + (q < extra ? 1 : 0);
    for (std::size_t k = 0; k < group; ++k) {
      out[order[pos++]] = static_cast<Quartile>(q);
    }
  }
  return out;
}

QuartileMap assign_quartiles(const FrequencyTable& freq) {
  if (freq.n_users() == 0 && freq.n_items() == 0) {
    throw InvalidArgument("assign_quartiles: empty frequency table");
  }
  QuartileMap map;
  map.user_quartile = quartiles_of(freq.user_freq, freq.user_names, &map.warnings, "user");
  map.item_quartile = quartiles_of(freq.item_freq, freq.item_names, &map.warnings, "item");
  return map;
}

DatasetSplit split(const RatingDataset& ds, double val_frac, double test_frac,
                   std::uint64_t seed) {
  if (!(val_frac >= 0.0) || !(test_frac >= 0.0) || !(val_frac + test_frac < 1.0)) {
    throw InvalidArgument("split: fractions must be >= 0 and sum to less than 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  SeededStream stream(seed);
  shuffle(std::span<std::size_t>(perm), stream);

  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  const auto n_test = std::min(
      n - n_val, static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n))));

  // 0 = train, 1 = validation, 2 = test
  std::vector<std::uint8_t> part(n, 0);
  for (std::size_t k = 0; k < n_val; ++k) part[perm[k]] = 1;
  for (std::size_t k = n_val; k < n_val + n_test; ++k) part[perm[k]] = 2;

  std::array<std::vector<RatingTriple>, 3> buckets;
  for (std::size_t k = 0; k < n; ++k) buckets[part[k]].push_back(ds.triples()[k]);
  return {ds.with_triples(std::move(buckets[0])), ds.with_triples(std::move(buckets[1])),
          ds.with_triples(std::move(buckets[2]))};
}

namespace {

// Keeps a uniform count in [1, group.size()] of the triple indices in
// `group`, chosen uniformly without replacement.
void keep_random_count(std::vector<std::size_t>& group, SeededStream& stream,
                       std::vector<std::uint8_t>& keep) {
  if (group.empty()) return;
  const auto target = static_cast<std::size_t>(stream.uniform_int(1, group.size()));
  // Partial Fisher-Yates from the front.
  for (std::size_t k = 0; k < target; ++k) {
    const auto j = k + static_cast<std::size_t>(stream.uniform_index(group.size() - k));
    std::swap(group[k], group[j]);
    keep[group[k]] = 1;
  }
}

}  // namespace

RatingDataset skewed_subsample(const RatingDataset& ds, std::uint64_t seed) {
  if (ds.empty()) throw InvalidArgument("skewed_subsample: empty dataset");
  SeededStream stream(seed);
  const auto& triples = ds.triples();

  std::vector<std::vector<std::size_t>> by_user(ds.n_users());
  for (std::size_t k = 0; k < triples.size(); ++k) {
    by_user[index_of(triples[k].user)].push_back(k);
  }
  std::vector<std::uint8_t> phase1(triples.size(), 0);
  for (auto& group : by_user) keep_random_count(group, stream, phase1);

  std::vector<std::vector<std::size_t>> by_item(ds.n_items());
  for (std::size_t k = 0; k < triples.size(); ++k) {
    if (phase1[k]) by_item[index_of(triples[k].item)].push_back(k);
  }
  std::vector<std::uint8_t> phase2(triples.size(), 0);
  for (auto& group : by_item) keep_random_count(group, stream, phase2);

  std::vector<std::size_t> kept_per_user(ds.n_users(), 0);
  for (std::size_t k = 0; k < triples.size(); ++k) {
    if (phase2[k]) ++kept_per_user[index_of(triples[k].user)];
  }
  for (std::size_t u = 0; u < ds.n_users(); ++u) {
    if (kept_per_user[u] > 0) continue;
    std::vector<std::size_t> candidates;
    for (const auto k : by_user[u]) {
      if (phase1[k]) candidates.push_back(k);
    }
    if (candidates.empty()) continue;
    std::sort(candidates.begin(), candidates.end());
    phase2[candidates[stream.uniform_index(candidates.size())]] = 1;
  }

  DatasetBuilder builder;
  for (std::size_t k = 0; k < triples.size(); ++k) {
    if (!phase2[k]) continue;
    const auto& t = triples[k];
    builder.add(ds.user_name(t.user), ds.item_name(t.item), t.rating);
  }
  return std::move(builder).build();
}

}  // namespace tailmc
