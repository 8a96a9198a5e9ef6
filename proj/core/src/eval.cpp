#include "tailmc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "tailmc/error.hpp"

namespace tailmc {

double rmse(std::span<const PredictionPair> pairs) {
  if (pairs.empty()) throw InvalidArgument("rmse: empty prediction list");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const double d = p.predicted - p.actual;
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

namespace {

struct Accumulator {
  double sum_sq = 0.0;
  std::size_t count = 0;

  void add(double err) {
    sum_sq += err * err;
    ++count;
  }
  double rmse() const { return std::sqrt(sum_sq / static_cast<double>(count)); }
};

QuartileCells to_cells(const std::array<Accumulator, kQuartiles>& acc) {
  QuartileCells cells;
  for (std::size_t q = 0; q < kQuartiles; ++q) {
    if (acc[q].count > 0) cells[q] = CellStat{acc[q].count, acc[q].rmse()};
  }
  return cells;
}

void check_dims(const RatingDataset& test, const FrequencyTable& freq) {
  if (test.n_users() != freq.n_users() || test.n_items() != freq.n_items()) {
    throw InvalidArgument("test split and frequency table use different index tables");
  }
}

}  // namespace

QuartileReport quartile_report(const Predictor& predictor, const RatingDataset& test,
                               const QuartileMap& quartiles, const FrequencyTable& freq) {
  check_dims(test, freq);
  std::array<Accumulator, kQuartiles> items{};
  std::array<Accumulator, kQuartiles> users{};
  for (const auto& t : test.triples()) {
    const double err = predictor(t.user, t.item) - t.rating;
    items[index_of(quartiles.of(t.item))].add(err);
    users[index_of(quartiles.of(t.user))].add(err);
  }
  return {to_cells(items), to_cells(users)};
}

std::vector<BucketPoint> bucket_curve(const Predictor& predictor, const RatingDataset& test,
                                      const FrequencyTable& freq, std::size_t buckets) {
  check_dims(test, freq);
  if (buckets == 0) throw InvalidArgument("bucket_curve: bucket count must be >= 1");
  const std::size_t n_items = freq.n_items();

  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (freq.item_freq[a] != freq.item_freq[b]) return freq.item_freq[a] > freq.item_freq[b];
    if (freq.item_names[a] != freq.item_names[b]) return freq.item_names[a] < freq.item_names[b];
    return a < b;
  });

  std::vector<BucketPoint> curve(buckets);
  std::vector<std::size_t> bucket_of(n_items, 0);
  const std::size_t base = n_items / buckets;
  const std::size_t extra = n_items % buckets;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    double freq_sum = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
      const auto item = order[pos++];
      bucket_of[item] = b;
      freq_sum += static_cast<double>(freq.item_freq[item]);
    }
    curve[b].bucket = b;
    curve[b].n_items = size;
    curve[b].mean_freq = size > 0 ? freq_sum / static_cast<double>(size) : 0.0;
  }

  // (bucket, user) -> errors of that user's test ratings in the bucket.
  std::map<std::pair<std::size_t, std::size_t>, Accumulator> per_user;
  for (const auto& t : test.triples()) {
    const double err = predictor(t.user, t.item) - t.rating;
    per_user[{bucket_of[index_of(t.item)], index_of(t.user)}].add(err);
  }
  std::vector<double> rmse_sum(buckets, 0.0);
  for (const auto& [key, acc] : per_user) {
    rmse_sum[key.first] += acc.rmse();
    ++curve[key.first].n_users;
  }
  for (std::size_t b = 0; b < buckets; ++b) {
    if (curve[b].n_users > 0) {
      curve[b].rmse = rmse_sum[b] / static_cast<double>(curve[b].n_users);
    }
  }
  return curve;
}

std::vector<ItemAccuracy> mae_accuracy(const Predictor& predictor, const RatingDataset& test,
                                       const FrequencyTable& freq, double threshold) {
  check_dims(test, freq);
  std::vector<std::size_t> total(freq.n_items(), 0);
  std::vector<std::size_t> accurate(freq.n_items(), 0);
  for (const auto& t : test.triples()) {
    const auto i = index_of(t.item);
    ++total[i];
    if (std::fabs(predictor(t.user, t.item) - t.rating) <= threshold) ++accurate[i];
  }
  std::vector<ItemAccuracy> out;
  for (std::size_t i = 0; i < total.size(); ++i) {
    if (total[i] == 0) continue;
    out.push_back({ItemIdx{static_cast<std::uint32_t>(i)}, freq.item_freq[i], total[i],
                   accurate[i]});
  }
  return out;
}

EvalReport evaluate(const Predictor& predictor, const RatingDataset& test,
                    const QuartileMap& quartiles, const FrequencyTable& freq,
                    const EvalOptions& options) {
  if (test.empty()) throw InvalidArgument("evaluate: empty test split");
  EvalReport report;
  std::vector<PredictionPair> pairs;
  pairs.reserve(test.size());
  for (const auto& t : test.triples()) pairs.push_back({predictor(t.user, t.item), t.rating});
  report.overall_rmse = rmse(pairs);
  report.n_test = test.size();
  const auto quart = quartile_report(predictor, test, quartiles, freq);
  report.item_quartiles = quart.item;
  report.user_quartiles = quart.user;
  report.buckets = bucket_curve(predictor, test, freq, options.buckets);
  report.item_accuracy = mae_accuracy(predictor, test, freq, options.mae_threshold);
  for (const auto& a : report.item_accuracy) report.mae_accurate_count += a.accurate_count;
  return report;
}

namespace {

QuartileCells mean_cells(std::span<const EvalReport> reports,
                         QuartileCells EvalReport::*field) {
  QuartileCells out;
  for (std::size_t q = 0; q < kQuartiles; ++q) {
    double rmse_sum = 0.0;
    double count_sum = 0.0;
    std::size_t present = 0;
    for (const auto& r : reports) {
      const auto& cell = (r.*field)[q];
      if (!cell) continue;
      rmse_sum += cell->rmse;
      count_sum += static_cast<double>(cell->count);
      ++present;
    }
    if (present > 0) {
      const double n = static_cast<double>(present);
      out[q] = CellStat{static_cast<std::size_t>(std::llround(count_sum / n)), rmse_sum / n};
    }
  }
  return out;
}

}  // namespace

EvalReport mean_report(std::span<const EvalReport> reports) {
  if (reports.empty()) throw InvalidArgument("mean_report: no reports");
  if (reports.size() == 1) return reports.front();
  const double n = static_cast<double>(reports.size());
  EvalReport out;
  double rmse_sum = 0.0;
  double n_test = 0.0;
  double accurate = 0.0;
  for (const auto& r : reports) {
    rmse_sum += r.overall_rmse;
    n_test += static_cast<double>(r.n_test);
    accurate += static_cast<double>(r.mae_accurate_count);
  }
  out.overall_rmse = rmse_sum / n;
  out.n_test = static_cast<std::size_t>(std::llround(n_test / n));
  out.mae_accurate_count = static_cast<std::size_t>(std::llround(accurate / n));
  out.item_quartiles = mean_cells(reports, &EvalReport::item_quartiles);
  out.user_quartiles = mean_cells(reports, &EvalReport::user_quartiles);

  const std::size_t n_buckets = reports.front().buckets.size();
  out.buckets.resize(n_buckets);
  for (std::size_t b = 0; b < n_buckets; ++b) {
    double freq_sum = 0.0;
    double items = 0.0;
    double users = 0.0;
    double bucket_rmse = 0.0;
    std::size_t present = 0;
    for (const auto& r : reports) {
      if (r.buckets.size() != n_buckets) throw InvalidArgument("mean_report: bucket counts differ");
      const auto& p = r.buckets[b];
      freq_sum += p.mean_freq;
      items += static_cast<double>(p.n_items);
      users += static_cast<double>(p.n_users);
      if (p.rmse) {
        bucket_rmse += *p.rmse;
        ++present;
      }
    }
    auto& point = out.buckets[b];
    point.bucket = b;
    point.mean_freq = freq_sum / n;
    point.n_items = static_cast<std::size_t>(std::llround(items / n));
    point.n_users = static_cast<std::size_t>(std::llround(users / n));
    if (present > 0) point.rmse = bucket_rmse / static_cast<double>(present);
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k + 1;
    while (end < order.size() && v[order[end]] == v[order[k]]) ++end;
    const double rank = 0.5 * static_cast<double>(k + end - 1) + 1.0;
    for (std::size_t j = k; j < end; ++j) ranks[order[j]] = rank;
    k = end;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("spearman: need two equal-length samples of size >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("paired_t_test: need two equal-length samples of size >= 2");
  }
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) mean += a[k] - b[k];
  mean /= n;
  double ss = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k] - mean;
    ss += d * d;
  }
  TTestResult result;
  result.dof = n - 1.0;
  const double se = std::sqrt(ss / (n - 1.0) / n);
  if (se == 0.0) {
    result.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    result.p_value = mean == 0.0 ? 1.0 : 0.0;
    return result;
  }
  result.t = mean / se;
  const boost::math::students_t dist(result.dof);
  result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(result.t)));
  return result;
}

std::vector<double> squared_errors(const Predictor& predictor, const RatingDataset& test) {
  std::vector<double> out;
  out.reserve(test.size());
  for (const auto& t : test.triples()) {
    const double err = predictor(t.user, t.item) - t.rating;
    out.push_back(err * err);
  }
  return out;
}

}  // namespace tailmc
