// Microbenchmarks for the hot paths: local seller training, the four
// aggregation rules, and a full marketplace round.
//
//   cmake --build build --target gradmarket_bench
//   ./build/benchmarks/gradmarket_bench

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "gradmarket/aggregate.hpp"
#include "gradmarket/engine.hpp"
#include "gradmarket/parallel.hpp"
#include "gradmarket/rng.hpp"

using namespace gradmarket;

namespace {

Dataset bench_dataset(int samples) { return make_synthetic(4, 16, samples, 1); }

ModelParams bench_model(ModelArch arch) {
  return init_model(arch, 16, 4, arch == ModelArch::mlp ? 32 : 0, 7);
}

std::vector<Submission> bench_submissions(std::size_t n, std::size_t dim) {
  Rng rng(99);
  std::vector<Submission> subs;
  subs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal() * 0.01;
    subs.push_back({static_cast<int>(i), 200, GradientVector(std::move(v))});
  }
  return subs;
}

void BM_LocalTrain(benchmark::State& state, ModelArch arch) {
  const int samples = static_cast<int>(state.range(0));
  const auto data = bench_dataset(samples);
  const auto start = bench_model(arch);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(local_train(start, data, 1, 64, 0.001, seed++));
  }
  state.SetItemsProcessed(state.iterations() * samples);
}

void BM_AggregateFedavg(benchmark::State& state) {
  const auto subs = bench_submissions(static_cast<std::size_t>(state.range(0)), 676);
  for (auto _ : state) benchmark::DoNotOptimize(fedavg(subs));
}

void BM_AggregateFltrust(benchmark::State& state) {
  const auto subs = bench_submissions(static_cast<std::size_t>(state.range(0)), 676);
  Rng rng(3);
  std::vector<double> b(676);
  for (double& x : b) x = rng.normal() * 0.01;
  const GradientVector buyer(std::move(b));
  for (auto _ : state) benchmark::DoNotOptimize(fltrust(subs, buyer));
}

void BM_AggregateMartfl(benchmark::State& state) {
  const auto subs = bench_submissions(static_cast<std::size_t>(state.range(0)), 676);
  Rng rng(3);
  std::vector<double> r(676);
  for (double& x : r) x = rng.normal() * 0.01;
  const GradientVector reference(std::move(r));
  for (auto _ : state) benchmark::DoNotOptimize(martfl(subs, reference));
}

void BM_AggregateSkymask(benchmark::State& state) {
  const auto global = bench_model(ModelArch::mlp);
  const auto subs =
      bench_submissions(static_cast<std::size_t>(state.range(0)), global.size());
  const auto root = bench_dataset(160);
  for (auto _ : state) {
    benchmark::DoNotOptimize(skymask(subs, global, root, 20, 0.1));
  }
}

void BM_RunRound(benchmark::State& state) {
  MarketplaceConfig config;
  config.dataset.classes = 4;
  config.dataset.dim = 16;
  config.dataset.train_samples = 8000;
  config.dataset.test_samples = 500;
  config.num_sellers = 30;
  config.num_rounds = 1;
  config.sample_fraction = 0.3;
  config.local_epochs = 2;
  config.seed = 1;
  const auto [train, test] = build_dataset(config);
  const auto base = init_experiment(config, train, test, 11);

  const unsigned jobs = static_cast<unsigned>(state.range(0));
  ThreadPool pool(jobs);
  for (auto _ : state) {
    state.PauseTiming();
    ExperimentState fresh = base;  // run_round mutates model and aggregator
    state.ResumeTiming();
    benchmark::DoNotOptimize(run_round(fresh, 1, jobs > 1 ? &pool : nullptr));
  }
}

BENCHMARK_CAPTURE(BM_LocalTrain, logreg, ModelArch::logreg)->Arg(256)->Arg(1024);
BENCHMARK_CAPTURE(BM_LocalTrain, mlp, ModelArch::mlp)->Arg(256)->Arg(1024);
BENCHMARK(BM_AggregateFedavg)->Arg(9)->Arg(30);
BENCHMARK(BM_AggregateFltrust)->Arg(9)->Arg(30);
BENCHMARK(BM_AggregateMartfl)->Arg(9)->Arg(30);
BENCHMARK(BM_AggregateSkymask)->Arg(9)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RunRound)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
