#include <benchmark/benchmark.h>

#include <random>

#include "fedsim/clustered.hpp"
#include "fedsim/engine.hpp"
#include "fedsim/strategies.hpp"

using namespace fedsim;

namespace {

Batch random_batch(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
  Batch b;
  b.X = Matrix(n, dim);
  for (double& v : b.X.data) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(label(rng));
  return b;
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const ModelSpec spec = ModelSpec::mlp(20, {hidden, hidden}, 5);
  const ParamVector w = init_params(spec, 1);
  const Batch b = random_batch(64, 20, 5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(spec, w, b, LossKind::cross_entropy));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_WeightedAverage(benchmark::State& state) {
  const auto clients = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::normal_distribution<double> g;
  std::vector<std::pair<ParamVector, double>> entries;
  for (std::size_t i = 0; i < clients; ++i) {
    ParamVector p(10000);
    for (double& v : p.values) v = g(rng);
    entries.emplace_back(std::move(p), 1.0 + double(i));
  }
  for (auto _ : state) benchmark::DoNotOptimize(weighted_average(entries));
}
BENCHMARK(BM_WeightedAverage)->Arg(10)->Arg(100);

void BM_HierarchicalSplit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::normal_distribution<double> g;
  std::vector<ParamVector> updates;
  for (std::size_t i = 0; i < n; ++i) {
    ParamVector u(200);
    for (double& v : u.values) v = g(rng) + (i % 2 ? 3.0 : -3.0);
    updates.push_back(std::move(u));
  }
  const SimilarityMatrix sim = SimilarityMatrix::from_updates(updates);
  for (auto _ : state) benchmark::DoNotOptimize(hierarchical_split(sim, 0.0, 2));
}
BENCHMARK(BM_HierarchicalSplit)->Arg(20)->Arg(100);

void BM_FedAvgRound(benchmark::State& state) {
  FederationConfig fc;
  fc.num_clients = static_cast<std::size_t>(state.range(0));
  fc.samples_min = fc.samples_max = 200;
  fc.input_dim = 20;
  fc.num_classes = 5;
  const Federation fed = generate_federation(fc);
  Hyperparams hp;
  FedAvgStrategy fedavg(ModelSpec::mlp(20, {32}, 5), hp);
  FederationState st = make_state(fed.clients, 1);
  fedavg.initialize(st, fed.clients);
  RoundOptions opts;
  opts.parallel = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_round(st, fedavg, fed.clients, opts));
}
BENCHMARK(BM_FedAvgRound)->Args({10, 0})->Args({10, 1})->Args({50, 0})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
