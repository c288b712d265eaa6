#include <benchmark/benchmark.h>

#include <vector>

#include "davots/attribution.hpp"
#include "davots/hclust.hpp"
#include "davots/metrics.hpp"
#include "davots/model.hpp"
#include "davots/codec.hpp"

namespace {

using namespace davots;

std::vector<std::vector<double>> rows(std::size_t count, std::size_t width) {
  Rng rng(42);
  std::vector<std::vector<double>> out(count, std::vector<double>(width));
  for (auto& r : out) {
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  }
  return out;
}

void BM_DistanceMatrix(benchmark::State& state) {
  const auto data = rows(static_cast<std::size_t>(state.range(0)), 500);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::distance_matrix(data, metrics::DistanceKind::norm_euclidean));
}
BENCHMARK(BM_DistanceMatrix)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_AgglomerateWard(benchmark::State& state) {
  const auto dm = metrics::distance_matrix(rows(static_cast<std::size_t>(state.range(0)), 64),
                                           metrics::DistanceKind::euclidean);
  for (auto _ : state) benchmark::DoNotOptimize(hclust::agglomerate(dm, hclust::Linkage::ward));
}
BENCHMARK(BM_AgglomerateWard)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = model::build_default_model(n, 2, 1);
  const auto x = rows(1, n)[0];
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(m, x));
}
BENCHMARK(BM_Forward)->Arg(150)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_Saliency(benchmark::State& state) {
  const auto m = model::build_default_model(500, 2, 1);
  const auto x = rows(1, 500)[0];
  for (auto _ : state) benchmark::DoNotOptimize(attribution::saliency(m, x));
}
BENCHMARK(BM_Saliency)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
