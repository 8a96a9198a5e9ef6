#include <benchmark/benchmark.h>

#include "tailmc/data.hpp"
#include "tailmc/harness.hpp"
#include "tailmc/models.hpp"
#include "tailmc/numeric.hpp"
#include "tailmc/synthgen.hpp"

using namespace tailmc;

namespace {

const DatasetSplit& skewed_split() {
  static const DatasetSplit parts = [] {
    SyntheticSpec spec;
    spec.n = 300;
    spec.m = 200;
    spec.rank = 5;
    spec.mask = MaskKind::Skewed;
    return split(make_synthetic(spec).ratings, 0.2, 0.2, 1);
  }();
  return parts;
}

TrainConfig one_epoch(std::size_t rank) {
  TrainConfig cfg;
  cfg.rank = rank;
  cfg.learn_rate = 0.02;
  cfg.max_epochs = 1;
  return cfg;
}

}  // namespace

static void BM_MfEpoch(benchmark::State& state) {
  const auto& parts = skewed_split();
  const auto cfg = one_epoch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(train_mf(parts.train, RatingDataset{}, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(parts.train.size()));
}
BENCHMARK(BM_MfEpoch)->Arg(5)->Arg(20)->Arg(100);

static void BM_TmfDropoutEpoch(benchmark::State& state) {
  const auto& parts = skewed_split();
  const auto freq = compute_frequencies(parts.train);
  const auto cfg = one_epoch(static_cast<std::size_t>(state.range(0)));
  SeededStream stream(3);
  for (auto _ : state)
    benchmark::DoNotOptimize(train_tmf_dropout(parts.train, RatingDataset{}, cfg, {10.0, 0.0}, freq, stream));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(parts.train.size()));
}
BENCHMARK(BM_TmfDropoutEpoch)->Arg(20)->Arg(100);

static void BM_PoissonSample(benchmark::State& state) {
  const double lambda = static_cast<double>(state.range(0)) / 10.0;
  SeededStream stream(5);
  for (auto _ : state) benchmark::DoNotOptimize(poisson_sample(lambda, stream));
}
BENCHMARK(BM_PoissonSample)->Arg(5)->Arg(50)->Arg(200)->Arg(1000);

static void BM_PoissonCutoff(benchmark::State& state) {
  const double lambda = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(poisson_cdf_cutoff(lambda, 1e-6));
}
BENCHMARK(BM_PoissonCutoff)->Arg(1)->Arg(20)->Arg(100);

static void BM_OrthonormalFactor(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(orthonormal_factor(rows, 20, seed++));
}
BENCHMARK(BM_OrthonormalFactor)->Arg(200)->Arg(2000);
BENCHMARK_MAIN();
