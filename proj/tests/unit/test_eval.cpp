#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tailmc/data.hpp"
#include "tailmc/error.hpp"
#include "tailmc/eval.hpp"
#include "tailmc/numeric.hpp"

using namespace tailmc;

namespace {

RatingDataset make(const std::vector<std::tuple<std::string, std::string, double>>& rows) {
  DatasetBuilder b;
  for (const auto& [u, i, r] : rows) b.add(u, i, r);
  return std::move(b).build();
}

// Looks ratings up by index pair.
Predictor truth_of(const RatingDataset& ds) {
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  for (const auto& t : ds.triples()) table[{index_of(t.user), index_of(t.item)}] = t.rating;
  return [table](UserIdx u, ItemIdx i) { return table.at({index_of(u), index_of(i)}); };
}

Predictor constant(double c) {
  return [c](UserIdx, ItemIdx) { return c; };
}

// 10 items i0..i9, item k rated by users u0..u{k} in train; one test rating
// per (user, item) pair listed in `test_rows`.
struct Fixture {
  RatingDataset train;
  RatingDataset test;
  FrequencyTable freq;
  QuartileMap quartiles;
};

Fixture ladder() {
  DatasetBuilder b;
  std::vector<std::tuple<std::string, std::string, double>> rows;
  for (int k = 0; k < 10; ++k)
    for (int u = 0; u <= k; ++u) b.add("u" + std::to_string(u), "i" + std::to_string(k), 1.0 + k);
  // test ratings share the tables: add them with distinct users afterwards
  for (int k = 0; k < 10; ++k) b.add("t" + std::to_string(k % 3), "i" + std::to_string(k), 2.0 * k);
  auto all = std::move(b).build();
  std::vector<RatingTriple> tr, te;
  for (const auto& t : all.triples()) (all.user_name(t.user)[0] == 't' ? te : tr).push_back(t);
  Fixture f;
  f.train = all.with_triples(tr);
  f.test = all.with_triples(te);
  f.freq = compute_frequencies(f.train);
  f.quartiles = assign_quartiles(f.freq);
  return f;
}

}  // namespace

TEST(Rmse, Examples) {
  const std::vector<PredictionPair> perfect{{1, 1}, {2, 2}};
  EXPECT_EQ(rmse(perfect), 0.0);
  const std::vector<PredictionPair> unit{{0, 1}};
  EXPECT_EQ(rmse(unit), 1.0);
  const std::vector<PredictionPair> two{{0, 3}, {0, 4}};
  EXPECT_DOUBLE_EQ(rmse(two), std::sqrt(12.5));
  EXPECT_THROW(rmse(std::vector<PredictionPair>{}), Error);
}

TEST(Rmse, PermutationInvariantAndScaleCovariant) {
  SeededStream s(3);
  std::vector<PredictionPair> pairs;
  for (int k = 0; k < 200; ++k) pairs.push_back({s.uniform01() * 10 - 5, s.uniform01() * 10 - 5});
  const double base = rmse(pairs);
  auto shuffled = pairs;
  shuffle(std::span<PredictionPair>(shuffled), s);
  EXPECT_NEAR(rmse(shuffled), base, 1e-12);
  for (double c : {-3.0, 0.5, 7.0}) {
    auto scaled = pairs;
    for (auto& p : scaled) {
      p.predicted *= c;
      p.actual *= c;
    }
    EXPECT_NEAR(rmse(scaled), std::abs(c) * base, 1e-12);
  }
}

TEST(QuartileReport, OnlyPopulatedCellsArePresent) {
  const auto train = make({{"a", "x", 1}, {"b", "y", 2}});
  const auto test = train;
  const auto freq = compute_frequencies(train);
  QuartileMap q;
  q.user_quartile = {Quartile::Q2, Quartile::Q2};
  q.item_quartile = {Quartile::Q4, Quartile::Q4};
  const auto rep = quartile_report(constant(0.0), test, q, freq);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_FALSE(rep.item[k].has_value());
  ASSERT_TRUE(rep.item[3].has_value());
  EXPECT_EQ(rep.item[3]->count, 2u);
  EXPECT_DOUBLE_EQ(rep.item[3]->rmse, std::sqrt(2.5));
  EXPECT_FALSE(rep.user[0].has_value());
  ASSERT_TRUE(rep.user[1].has_value());
}

TEST(QuartileReport, GroundTruthGivesZero) {
  const auto f = ladder();
  const auto rep = quartile_report(truth_of(f.test), f.test, f.quartiles, f.freq);
  for (const auto& cell : rep.item)
    if (cell) EXPECT_EQ(cell->rmse, 0.0);
  for (const auto& cell : rep.user)
    if (cell) EXPECT_EQ(cell->rmse, 0.0);
}

TEST(BucketCurve, OneItemPerBucketOrderedByFrequency) {
  const auto f = ladder();
  const auto curve = bucket_curve(constant(0.0), f.test, f.freq, 10);
  ASSERT_EQ(curve.size(), 10u);
  for (std::size_t b = 0; b < 10; ++b) {
    EXPECT_EQ(curve[b].n_items, 1u);
    // Bucket b holds item i{9-b}, with training count 10-b and test rating 2(9-b).
    EXPECT_DOUBLE_EQ(curve[b].mean_freq, 10.0 - b);
    ASSERT_TRUE(curve[b].rmse.has_value());
    EXPECT_DOUBLE_EQ(*curve[b].rmse, 2.0 * (9 - b));
    EXPECT_EQ(curve[b].n_users, 1u);
  }
}

TEST(BucketCurve, AveragesPerUserRmse) {
  // Two items with equal frequency in one bucket; user a has errors 1 and 3,
  // user b has error 2.
  const auto all = make({{"a", "x", 0}, {"a", "y", 0}, {"b", "x", 0}, {"b", "y", 0},
                         {"c", "x", 1}, {"c", "y", 3}, {"d", "x", 2}});
  std::vector<RatingTriple> tr(all.triples().begin(), all.triples().begin() + 4);
  std::vector<RatingTriple> te(all.triples().begin() + 4, all.triples().end());
  const auto train = all.with_triples(tr);
  const auto test = all.with_triples(te);
  const auto curve = bucket_curve(constant(0.0), test, compute_frequencies(train), 1);
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_EQ(curve[0].n_users, 2u);
  EXPECT_DOUBLE_EQ(*curve[0].rmse, (std::sqrt(5.0) + 2.0) / 2.0);
}

TEST(BucketCurve, RemainderGoesToLeadingBuckets) {
  const auto f = ladder();
  const auto curve = bucket_curve(constant(0.0), f.test, f.freq, 3);
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].n_items, 4u);
  EXPECT_EQ(curve[1].n_items, 3u);
  EXPECT_EQ(curve[2].n_items, 3u);
}

TEST(MaeAccuracy, PerfectConstantAndHugeThreshold) {
  const auto f = ladder();
  const auto perfect = mae_accuracy(truth_of(f.test), f.test, f.freq);
  ASSERT_EQ(perfect.size(), 10u);
  for (const auto& a : perfect) EXPECT_EQ(a.accurate_count, a.test_count);
  for (const auto& a : mae_accuracy(constant(1e6), f.test, f.freq)) EXPECT_EQ(a.accurate_count, 0u);
  for (const auto& a : mae_accuracy(constant(1e6), f.test, f.freq, 1e300)) EXPECT_EQ(a.accurate_count, a.test_count);
}

TEST(MaeAccuracy, ThresholdIsInclusive) {
  const auto ds = make({{"a", "x", 1.0}});
  const auto acc = mae_accuracy(constant(1.5), ds, compute_frequencies(ds), 0.5);
  ASSERT_EQ(acc.size(), 1u);
  EXPECT_EQ(acc[0].accurate_count, 1u);
}

TEST(Evaluate, OverallMatchesRmse) {
  const auto f = ladder();
  const auto rep = evaluate(constant(1.0), f.test, f.quartiles, f.freq);
  std::vector<PredictionPair> pairs;
  for (const auto& t : f.test.triples()) pairs.push_back({1.0, t.rating});
  EXPECT_DOUBLE_EQ(rep.overall_rmse, rmse(pairs));
  EXPECT_EQ(rep.n_test, f.test.size());
}

TEST(MeanReport, SingleReportIsIdentity) {
  const auto f = ladder();
  const auto rep = evaluate(constant(1.0), f.test, f.quartiles, f.freq);
  const std::vector<EvalReport> one{rep};
  const auto mean = mean_report(one);
  EXPECT_EQ(mean.overall_rmse, rep.overall_rmse);
  EXPECT_EQ(mean.item_quartiles, rep.item_quartiles);
  EXPECT_EQ(mean.user_quartiles, rep.user_quartiles);
  EXPECT_EQ(mean.buckets, rep.buckets);
}

TEST(MeanReport, AveragesPresentCells) {
  EvalReport a, b;
  a.overall_rmse = 1.0;
  b.overall_rmse = 3.0;
  a.item_quartiles[0] = CellStat{2, 1.0};
  b.item_quartiles[0] = CellStat{4, 2.0};
  a.item_quartiles[1] = CellStat{1, 5.0};
  const std::vector<EvalReport> both{a, b};
  const auto m = mean_report(both);
  EXPECT_DOUBLE_EQ(m.overall_rmse, 2.0);
  ASSERT_TRUE(m.item_quartiles[0].has_value());
  EXPECT_DOUBLE_EQ(m.item_quartiles[0]->rmse, 1.5);
  EXPECT_EQ(m.item_quartiles[0]->count, 3u);
  ASSERT_TRUE(m.item_quartiles[1].has_value());
  EXPECT_DOUBLE_EQ(m.item_quartiles[1]->rmse, 5.0);
  EXPECT_FALSE(m.item_quartiles[2].has_value());
}

TEST(Spearman, MatchesReferenceValues) {
  // scipy.stats.spearmanr
  const std::vector<double> x1{1, 2, 3, 4, 5}, y1{5, 6, 7, 8, 7};
  EXPECT_NEAR(spearman(x1, y1), 0.8207826816681233, 1e-12);
  const std::vector<double> x2{10, 20, 30, 40, 50, 60}, y2{3, 1, 4, 1, 5, 9};
  EXPECT_NEAR(spearman(x2, y2), 0.6667366910003157, 1e-12);
  const std::vector<double> rev{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(x1, rev), -1.0, 1e-15);
}

TEST(PairedTTest, MatchesReferenceValues) {
  // scipy.stats.ttest_rel
  const std::vector<double> a{1.0, 2.5, 3.1, 4.8, 5.0, 6.2}, b{0.8, 2.0, 3.5, 4.0, 4.1, 5.9};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, 1.9943529299054759, 1e-12);
  EXPECT_NEAR(r.p_value, 0.10267739217374937, 1e-10);
  EXPECT_DOUBLE_EQ(r.dof, 5.0);
}

TEST(SquaredErrors, InTestOrder) {
  const auto ds = make({{"a", "x", 1.0}, {"b", "y", -2.0}});
  const auto e = squared_errors(constant(1.0), ds);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_EQ(e[1], 9.0);
}
