#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tailmc/data.hpp"
#include "tailmc/error.hpp"
#include "tailmc/harness.hpp"
#include "tailmc/models.hpp"
#include "tailmc/numeric.hpp"

using namespace tailmc;

namespace {

RatingDataset make(const std::vector<std::tuple<std::string, std::string, double>>& rows) {
  DatasetBuilder b;
  for (const auto& [u, i, r] : rows) b.add(u, i, r);
  return std::move(b).build();
}

DenseFactor factor(std::size_t rows, std::size_t cols, std::vector<double> values) {
  DenseFactor m(rows, cols);
  for (std::size_t k = 0; k < values.size(); ++k) m.values()[k] = values[k];
  return m;
}

constexpr UserIdx U0{0}, U1{1};
constexpr ItemIdx I0{0}, I1{1};

// w/2 (r - p_a.q_a)^2 + reg/2 (|p_a|^2 + |q_a|^2)
double rating_loss(const std::vector<double>& p, const std::vector<double>& q, double r,
                   std::size_t active, double w, double reg) {
  double dot = 0.0, pp = 0.0, qq = 0.0;
  for (std::size_t j = 0; j < active; ++j) {
    dot += p[j] * q[j];
    pp += p[j] * p[j];
    qq += q[j] * q[j];
  }
  return 0.5 * w * (r - dot) * (r - dot) + 0.5 * reg * (pp + qq);
}

long double poisson_cdf(double lambda, std::uint64_t s) {
  long double term = std::exp(-static_cast<long double>(lambda));
  long double cdf = term;
  for (std::uint64_t k = 1; k <= s; ++k) {
    term *= lambda / static_cast<long double>(k);
    cdf += term;
  }
  return cdf;
}

TrainConfig config(std::size_t rank, double reg, double lr, std::size_t epochs, std::uint64_t seed = 1) {
  TrainConfig c;
  c.rank = rank;
  c.reg = reg;
  c.learn_rate = lr;
  c.max_epochs = epochs;
  c.seed = seed;
  return c;
}

struct Split {
  DatasetSplit parts;
  FrequencyTable freq;
};

Split uniform_case(std::size_t n, std::size_t m, std::size_t rank, double density, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n = n;
  spec.m = m;
  spec.rank = rank;
  spec.seed = seed;
  spec.mask = MaskKind::Uniform;
  spec.density = density;
  Split s;
  s.parts = split(make_synthetic(spec).ratings, 0.2, 0.2, seed);
  s.freq = compute_frequencies(s.parts.train);
  return s;
}

}  // namespace

TEST(PredictMf, Examples) {
  auto m = LatentModel::from_factors(factor(1, 2, {1, 2}), factor(2, 2, {3, 4, 0, 0}));
  EXPECT_EQ(predict_mf(m, U0, I0), 11.0);
  EXPECT_EQ(predict_mf(m, U0, I1), 0.0);
  auto scalar = LatentModel::from_factors(factor(1, 1, {-1.5}), factor(1, 1, {4}));
  EXPECT_EQ(predict_mf(scalar, U0, I0), -6.0);
}

TEST(PredictMf, OutOfRangeIndexThrows) {
  auto m = LatentModel::from_factors(factor(1, 1, {1}), factor(1, 1, {1}));
  EXPECT_THROW(predict_mf(m, U1, I0), std::out_of_range);
  EXPECT_THROW(predict_mf(m, U0, I1), std::out_of_range);
}

TEST(PredictTmf, TruncatedDot) {
  auto m = LatentModel::from_factors(factor(1, 3, {1, 2, 3}), factor(1, 3, {1, 1, 1}));
  EXPECT_EQ(truncated_predict(m, U0, I0, 2), 3.0);
  EXPECT_EQ(truncated_predict(m, U0, I0, 1), 1.0);
  EXPECT_EQ(truncated_predict(m, U0, I0, 3), predict_mf(m, U0, I0));
}

TEST(PredictTmf, FullMaskEqualsMf) {
  const auto ds = make({{"a", "x", 1.0}});
  const auto freq = compute_frequencies(ds);
  auto m = LatentModel::from_factors(factor(1, 3, {1, 2, 3}), factor(1, 3, {4, 5, 6}));
  m.kind = ModelKind::TMF;
  m.trunc = TruncationConfig{40.0, -1.0};
  EXPECT_EQ(active_count(m, U0, I0, freq), 3u);
  EXPECT_EQ(predict_tmf(m, U0, I0, freq), predict_mf(m, U0, I0));
  m.trunc = TruncationConfig{40.0, 1.0};  // f_min = 1 sits on the midpoint: round(1.5) = 2
  EXPECT_EQ(active_count(m, U0, I0, freq), 2u);
  EXPECT_EQ(predict_tmf(m, U0, I0, freq), 14.0);
}

TEST(PredictTmfDropout, CutoffMatchesCdfSummation) {
  const std::size_t r = 40;
  DenseFactor p(1, r), q(1, r);
  for (std::size_t j = 0; j < r; ++j) {
    p(0, j) = 1.0;
    q(0, j) = std::pow(2.0, -static_cast<double>(j));
  }
  auto m = LatentModel::from_factors(p, q);
  m.kind = ModelKind::TMFDropout;
  m.cdf_epsilon = 1e-6;
  FrequencyTable freq;
  freq.user_freq = {1};
  freq.item_freq = {1};
  freq.user_names = {"a"};
  freq.item_names = {"x"};
  for (double f : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    freq.user_norm = {f};
    freq.item_norm = {1.0};
    for (double z : {-0.5, 0.0, 0.5}) {
      m.trunc = TruncationConfig{10.0, z};
      const double lambda = r / (1.0 + std::exp(-10.0 * (f - z)));
      std::uint64_t s = 0;
      while (poisson_cdf(lambda, s) < 1.0L - 1e-6L) ++s;
      const std::size_t expect = std::clamp<std::size_t>(s, 1, r);
      EXPECT_EQ(active_count(m, U0, I0, freq), expect) << f << " " << z;
      double dot = 0.0;
      for (std::size_t j = 0; j < expect; ++j) dot += q(0, j);
      EXPECT_DOUBLE_EQ(predict_tmf_dropout(m, U0, I0, freq), dot);
    }
  }
}

TEST(Predict, UnseenEntityGetsGlobalMean) {
  const auto all = make({{"a", "x", 2.0}, {"a", "y", 4.0}, {"b", "x", 0.0}});
  const auto train = all.with_triples({all.triples()[0], all.triples()[1]});
  const auto m = train_mf(train, RatingDataset{}, config(2, 0.01, 0.05, 5));
  EXPECT_EQ(predict_mf(m, U1, I0), 3.0);
  EXPECT_NE(predict_mf(m, U0, I0), 3.0);
}

TEST(TrainMf, ScalarLeastSquares) {
  const auto ds = make({{"a", "x", 4.0}});
  const auto m = train_mf(ds, RatingDataset{}, config(1, 0.0, 0.05, 2000));
  EXPECT_NEAR(predict_mf(m, U0, I0), 4.0, 1e-3);
}

TEST(TrainMf, RecoversExactRankTwo) {
  const auto s = uniform_case(50, 40, 2, 0.6, 3);
  auto cfg = config(2, 0.001, 0.02, 1000);
  cfg.patience = 20;
  const auto m = train_mf(s.parts.train, s.parts.validation, cfg);
  double sum = 0.0;
  for (const auto& t : s.parts.test.triples()) {
    const double e = predict_mf(m, t.user, t.item) - t.rating;
    sum += e * e;
  }
  EXPECT_LT(std::sqrt(sum / s.parts.test.size()), 0.05 * 20.0);
}

TEST(TrainMf, HeavyRegularizationShrinksToZero) {
  const auto s = uniform_case(20, 20, 2, 0.5, 4);
  const auto m = train_mf(s.parts.train, RatingDataset{}, config(3, 1e3, 1e-4, 200));
  double max_abs = 0.0;
  for (const auto& t : s.parts.train.triples()) max_abs = std::max(max_abs, std::abs(predict_mf(m, t.user, t.item)));
  EXPECT_LT(max_abs, 1e-6);
}

TEST(TrainMf, DeterministicForSeed) {
  const auto s = uniform_case(30, 20, 2, 0.5, 5);
  const auto a = train_mf(s.parts.train, s.parts.validation, config(4, 0.01, 0.01, 30, 7));
  const auto b = train_mf(s.parts.train, s.parts.validation, config(4, 0.01, 0.01, 30, 7));
  const auto c = train_mf(s.parts.train, s.parts.validation, config(4, 0.01, 0.01, 30, 8));
  EXPECT_EQ(a.users, b.users);
  EXPECT_EQ(a.items, b.items);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_NE(a.users, c.users);
}

TEST(TrainMf, ObjectiveDecreasesWithSmallSteps) {
  const auto s = uniform_case(5, 5, 1, 1.0, 6);
  const auto m = train_mf(s.parts.train, RatingDataset{}, config(1, 0.01, 0.002, 200));
  const auto& ep = m.trace.epochs;
  ASSERT_EQ(ep.size(), 200u);
  for (std::size_t k = 1; k < ep.size(); ++k) EXPECT_LE(ep[k].train_objective, ep[k - 1].train_objective * (1 + 1e-9));
  EXPECT_LT(ep.back().train_objective, ep.front().train_objective);
}

TEST(TrainMf, DivergenceIsReported) {
  const auto s = uniform_case(20, 20, 2, 0.5, 7);
  try {
    train_mf(s.parts.train, RatingDataset{}, config(5, 0.0, 50.0, 50));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_NE(std::string(e.what()).find(std::to_string(e.epoch())), std::string::npos);
  }
}

TEST(TrainMf, RejectsBadConfig) {
  const auto ds = make({{"a", "x", 1.0}});
  EXPECT_THROW(train_mf(ds, RatingDataset{}, config(0, 0.01, 0.01, 1)), InvalidArgument);
  EXPECT_THROW(train_mf(ds, RatingDataset{}, config(1, -1.0, 0.01, 1)), InvalidArgument);
  EXPECT_THROW(train_mf(ds, RatingDataset{}, config(1, 0.01, 0.0, 1)), InvalidArgument);
}

TEST(Gradient, MatchesFiniteDifferences) {
  SeededStream s(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + s.uniform_index(6);
    const std::size_t active = 1 + s.uniform_index(r);
    std::vector<double> p(r), q(r);
    for (auto& v : p) v = s.uniform(-1, 1);
    for (auto& v : q) v = s.uniform(-1, 1);
    const double rating = s.uniform(-5, 5), w = s.uniform(0.1, 2), reg = s.uniform(0, 0.5);
    const auto g = rating_gradient(p, q, rating, active, w, reg);
    const double h = 1e-5;
    for (std::size_t j = 0; j < r; ++j) {
      auto pp = p, pm = p, qp = q, qm = q;
      pp[j] += h;
      pm[j] -= h;
      qp[j] += h;
      qm[j] -= h;
      const double du = (rating_loss(pp, q, rating, active, w, reg) - rating_loss(pm, q, rating, active, w, reg)) / (2 * h);
      const double di = (rating_loss(p, qp, rating, active, w, reg) - rating_loss(p, qm, rating, active, w, reg)) / (2 * h);
      EXPECT_NEAR(g.user[j], du, 1e-6 * std::max(1.0, std::abs(du)));
      EXPECT_NEAR(g.item[j], di, 1e-6 * std::max(1.0, std::abs(di)));
      if (j >= active) {
        EXPECT_EQ(g.user[j], 0.0);
        EXPECT_EQ(g.item[j], 0.0);
      }
    }
  }
}

TEST(Gradient, WeightScalesErrorTerm) {
  const std::vector<double> p{1.0}, q{1.0};
  const auto low = rating_gradient(p, q, 3.0, 1, inverse_frequency_weight(1.0, 10.0), 0.0);
  const auto high = rating_gradient(p, q, 3.0, 1, inverse_frequency_weight(0.0, 10.0), 0.0);
  EXPECT_NEAR(high.user[0] / low.user[0], 11.0, 1e-12);
}

TEST(SgdStep, FollowsTheGradient) {
  std::vector<double> p{0.5, -0.2, 0.3}, q{0.1, 0.4, -0.6};
  const auto g = rating_gradient(p, q, 2.0, 2, 0.7, 0.1);
  auto p2 = p, q2 = q;
  const double err = sgd_step(p2, q2, 2.0, 2, 0.7, 0.1, 0.05);
  EXPECT_DOUBLE_EQ(err, 0.5 * 0.1 + -0.2 * 0.4 - 2.0);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(p2[j], p[j] - 0.05 * g.user[j]);
    EXPECT_DOUBLE_EQ(q2[j], q[j] - 0.05 * g.item[j]);
  }
}

TEST(TrainTmf, FullMaskReproducesMf) {
  const auto s = uniform_case(30, 30, 3, 0.5, 8);
  const auto cfg = config(5, 0.01, 0.01, 25, 3);
  const auto mf = train_mf(s.parts.train, s.parts.validation, cfg);
  const auto tmf = train_tmf(s.parts.train, s.parts.validation, cfg, {40.0, -1.0}, s.freq);
  EXPECT_EQ(tmf.users, mf.users);
  EXPECT_EQ(tmf.items, mf.items);
  EXPECT_EQ(tmf.trace, mf.trace);
}

TEST(TrainTmf, SingleActiveCoordinateLeavesTheRestAtInit) {
  const auto s = uniform_case(20, 20, 2, 0.5, 9);
  const TruncationConfig one{40.0, 1.0};  // r = 2, f_min <= 1: round(<= 1) clamps to 1
  const auto init = train_tmf(s.parts.train, RatingDataset{}, config(2, 0.01, 0.01, 0, 4), one, s.freq);
  const auto trained = train_tmf(s.parts.train, RatingDataset{}, config(2, 0.01, 0.01, 30, 4), one, s.freq);
  bool first_moved = false;
  for (std::size_t u = 0; u < init.n_users(); ++u) {
    EXPECT_EQ(trained.users(u, 1), init.users(u, 1));
    first_moved = first_moved || trained.users(u, 0) != init.users(u, 0);
  }
  for (std::size_t i = 0; i < init.n_items(); ++i) EXPECT_EQ(trained.items(i, 1), init.items(i, 1));
  EXPECT_TRUE(first_moved);
}

TEST(TrainIfwmf, ZeroRhoReproducesMf) {
  const auto s = uniform_case(30, 30, 3, 0.5, 10);
  const auto cfg = config(4, 0.01, 0.01, 25, 5);
  const auto mf = train_mf(s.parts.train, s.parts.validation, cfg);
  const auto w = train_ifwmf(s.parts.train, s.parts.validation, cfg, 0.0, s.freq);
  EXPECT_EQ(w.users, mf.users);
  EXPECT_EQ(w.trace, mf.trace);
}

TEST(TrainTmfDropout, ThetaMeanFollowsTheSigmoidValue) {
  const auto ds = make({{"a", "x", 1.0}});
  const auto freq = compute_frequencies(ds);
  SeededStream stream(31);
  const auto m = train_tmf_dropout(ds, RatingDataset{}, config(10, 0.01, 0.01, 2000), {5.0, 1.0}, freq, stream);
  ASSERT_EQ(m.trace.theta_draws, 2000u);
  const double mean = static_cast<double>(m.trace.theta_sum) / 2000.0;
  EXPECT_NEAR(mean, 5.0, 3.0 * std::sqrt(5.0 / 2000.0));
}

TEST(TrainTmfDropout, DeterministicForSeed) {
  const auto s = uniform_case(20, 20, 2, 0.5, 11);
  const auto cfg = config(6, 0.01, 0.01, 15, 2);
  SeededStream a(99), b(99);
  const auto m1 = train_tmf_dropout(s.parts.train, s.parts.validation, cfg, {10.0, 0.0}, s.freq, a);
  const auto m2 = train_tmf_dropout(s.parts.train, s.parts.validation, cfg, {10.0, 0.0}, s.freq, b);
  EXPECT_EQ(m1.users, m2.users);
  EXPECT_EQ(m1.trace, m2.trace);
}

TEST(TrainTmfDropout, LowMeanBehavesLikeRankOne) {
  const auto s = uniform_case(20, 20, 2, 0.5, 12);
  SeededStream stream(5);
  const TruncationConfig low{40.0, 1.0};
  const auto init = train_tmf(s.parts.train, RatingDataset{}, config(4, 0.01, 0.01, 0, 4), low, s.freq);
  const auto m = train_tmf_dropout(s.parts.train, RatingDataset{}, config(4, 0.01, 0.01, 10, 4), low, s.freq, stream);
  // Poisson(<= 2) draws rarely exceed 1 for low-frequency pairs; the last
  // coordinate is almost never touched.
  std::size_t untouched = 0;
  for (std::size_t u = 0; u < m.n_users(); ++u) untouched += m.users(u, 3) == init.users(u, 3);
  EXPECT_GE(untouched, m.n_users() / 2);
}

TEST(Farp, SingleCandidateFillsEverySlot) {
  const auto s = uniform_case(30, 30, 2, 0.5, 13);
  const auto q = assign_quartiles(s.freq);
  const auto ens = farp_fit(s.parts.train, s.parts.validation, {config(3, 0.01, 0.01, 20)}, s.freq, q);
  for (std::size_t k = 0; k < kQuartiles; ++k) {
    EXPECT_EQ(ens.user_slot[k], 0u);
    EXPECT_EQ(ens.item_slot[k], 0u);
  }
  for (const auto& t : s.parts.test.triples())
    EXPECT_EQ(farp_predict(ens, t.user, t.item), predict_mf(ens.models[0], t.user, t.item));
}

TEST(Farp, DominantCandidateFillsEverySlot) {
  const auto s = uniform_case(40, 40, 2, 0.6, 14);
  const auto q = assign_quartiles(s.freq);
  auto trained = config(2, 0.01, 0.02, 300);
  trained.patience = 20;
  const auto ens = farp_fit(s.parts.train, s.parts.validation, {config(2, 0.01, 0.02, 0), trained}, s.freq, q);
  for (std::size_t k = 0; k < kQuartiles; ++k) {
    EXPECT_EQ(ens.user_slot[k], 1u);
    EXPECT_EQ(ens.item_slot[k], 1u);
  }
}

TEST(Farp, SelectionFollowsCandidateOrder) {
  const auto s = uniform_case(30, 30, 3, 0.5, 15);
  const auto q = assign_quartiles(s.freq);
  std::vector<LatentModel> models{train_mf(s.parts.train, s.parts.validation, config(1, 0.01, 0.02, 60)),
                                  train_mf(s.parts.train, s.parts.validation, config(3, 0.01, 0.02, 60)),
                                  train_mf(s.parts.train, s.parts.validation, config(8, 0.1, 0.02, 60))};
  const auto a = farp_select(models, s.parts.validation, s.freq, q);
  std::vector<LatentModel> reversed{models[2], models[1], models[0]};
  const auto b = farp_select(reversed, s.parts.validation, s.freq, q);
  for (std::size_t k = 0; k < kQuartiles; ++k) {
    EXPECT_EQ(a.user_slot[k], 2 - b.user_slot[k]);
    EXPECT_EQ(a.item_slot[k], 2 - b.item_slot[k]);
  }
}

TEST(Farp, RoutesByRawCountsWithTiesToUser) {
  // user a: 1 rating, user b: 3; item x: 3 ratings, item y: 1.
  const auto ds = make({{"a", "x", 1}, {"b", "x", 1}, {"b", "y", 1}, {"c", "x", 1}, {"b", "z", 1}, {"d", "w", 1}});
  FarpEnsemble ens;
  ens.frequencies = compute_frequencies(ds);
  ens.quartiles.user_quartile.assign(ds.n_users(), Quartile::Q1);
  ens.quartiles.item_quartile.assign(ds.n_items(), Quartile::Q4);
  const auto n = ds.n_users(), m = ds.n_items();
  ens.models.push_back(LatentModel::from_factors(DenseFactor(n, 1, 1.0), DenseFactor(m, 1, 1.0)));
  ens.models.push_back(LatentModel::from_factors(DenseFactor(n, 1, 2.0), DenseFactor(m, 1, 1.0)));
  ens.user_slot.fill(0);
  ens.item_slot.fill(1);
  const UserIdx a{0}, b{1}, d{3};
  const ItemIdx x{0}, y{1}, w{3};
  EXPECT_EQ(farp_predict(ens, a, x), 1.0);  // f_u 1 < f_i 3
  EXPECT_EQ(farp_predict(ens, b, y), 2.0);  // f_i 1 < f_u 3
  EXPECT_EQ(farp_predict(ens, d, w), 1.0);  // tie
}

TEST(Farp, EmptyQuartileFallsBackWithWarning) {
  const auto s = uniform_case(30, 30, 2, 0.5, 16);
  QuartileMap q;
  q.user_quartile.assign(s.freq.n_users(), Quartile::Q2);
  q.item_quartile.assign(s.freq.n_items(), Quartile::Q3);
  const auto ens = farp_fit(s.parts.train, s.parts.validation,
                            {config(1, 0.01, 0.02, 30), config(2, 0.01, 0.02, 30)}, s.freq, q);
  EXPECT_EQ(ens.user_slot[0], ens.global_best);
  EXPECT_EQ(ens.item_slot[3], ens.global_best);
  EXPECT_EQ(ens.warnings.size(), 6u);
}

TEST(ModelKind, NamesRoundTrip) {
  for (auto k : {ModelKind::MF, ModelKind::TMF, ModelKind::TMFDropout, ModelKind::IFWMF})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_model_kind("svd"), InvalidArgument);
}
