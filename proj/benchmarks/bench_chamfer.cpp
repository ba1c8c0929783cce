#include <benchmark/benchmark.h>

#include "rangecast/losses.hpp"
#include "rangecast/rng.hpp"

using namespace rangecast;

namespace {

PointCloud random_cloud(size_t n, uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  for (size_t i = 0; i < n; ++i)
    cloud.points.push_back({rng.uniform(-40, 40), rng.uniform(-40, 40),
                            rng.uniform(-2, 3)});
  return cloud;
}

}  // namespace

static void BM_ChamferKdTree(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const PointCloud a = random_cloud(n, 1);
  const PointCloud b = random_cloud(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_distance(a, b));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ChamferKdTree)->Arg(1024)->Arg(4096)->Arg(16384);

static void BM_ChamferBruteForce(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const PointCloud a = random_cloud(n, 1);
  const PointCloud b = random_cloud(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(chamfer_distance_bruteforce(a, b));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ChamferBruteForce)->Arg(1024)->Arg(4096);
