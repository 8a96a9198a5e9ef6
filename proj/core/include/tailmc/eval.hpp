#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tailmc/data.hpp"
#include "tailmc/models.hpp"

namespace tailmc {

struct PredictionPair {
  double predicted;
  double actual;
};

// sqrt(mean (predicted - actual)^2). Throws on an empty list.
double rmse(std::span<const PredictionPair> pairs);

struct CellStat {
  std::size_t count = 0;
  double rmse = 0.0;
  friend bool operator==(const CellStat&, const CellStat&) = default;
};

// Empty cells are std::nullopt, never a zero RMSE.
using QuartileCells = std::array<std::optional<CellStat>, kQuartiles>;

struct QuartileReport {
  QuartileCells item;
  QuartileCells user;
};

// Test RMSE grouped by the item's quartile and, separately, the user's.
// `quartiles` and `freq` come from the training split.
QuartileReport quartile_report(const Predictor& predictor, const RatingDataset& test,
                               const QuartileMap& quartiles, const FrequencyTable& freq);

struct BucketPoint {
  std::size_t bucket = 0;
  std::size_t n_items = 0;
  double mean_freq = 0.0;     // mean training count of the bucket's items
  std::size_t n_users = 0;    // users with at least one test rating in the bucket
  std::optional<double> rmse; // mean over those users of their per-bucket RMSE
  friend bool operator==(const BucketPoint&, const BucketPoint&) = default;
};

// Items ordered by decreasing training frequency (identifier tie-break) are
// cut into `buckets` near-equal groups, the remainder going to the leading
// buckets. For each user the RMSE of their test ratings inside a bucket is
// computed, then averaged over users with ratings in that bucket.
std::vector<BucketPoint> bucket_curve(const Predictor& predictor, const RatingDataset& test,
                                      const FrequencyTable& freq, std::size_t buckets = 10);

struct ItemAccuracy {
  ItemIdx item;
  std::size_t freq = 0;            // training count
  std::size_t test_count = 0;
  std::size_t accurate_count = 0;  // |predicted - actual| <= threshold
  friend bool operator==(const ItemAccuracy&, const ItemAccuracy&) = default;
};

// One entry per item with test ratings, in item-index order.
std::vector<ItemAccuracy> mae_accuracy(const Predictor& predictor, const RatingDataset& test,
                                       const FrequencyTable& freq, double threshold = 0.5);

struct EvalReport {
  double overall_rmse = 0.0;
  std::size_t n_test = 0;
  QuartileCells item_quartiles;
  QuartileCells user_quartiles;
  std::vector<BucketPoint> buckets;
  std::size_t mae_accurate_count = 0;
  std::vector<ItemAccuracy> item_accuracy;
};

struct EvalOptions {
  std::size_t buckets = 10;
  double mae_threshold = 0.5;
};

EvalReport evaluate(const Predictor& predictor, const RatingDataset& test,
                    const QuartileMap& quartiles, const FrequencyTable& freq,
                    const EvalOptions& options = {});

// Field-wise arithmetic mean. A quartile cell or bucket RMSE is averaged over
// the reports where it is present; counts are averaged and rounded.
EvalReport mean_report(std::span<const EvalReport> reports);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

struct TTestResult {
  double t = 0.0;
  double dof = 0.0;
  double p_value = 1.0;  // two-sided
};

// Paired t-test over per-rating differences a[k] - b[k]; used to compare the
// squared errors of two methods on the same test ratings.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Squared error of every test rating, in test order.
std::vector<double> squared_errors(const Predictor& predictor, const RatingDataset& test);

}  // namespace tailmc
