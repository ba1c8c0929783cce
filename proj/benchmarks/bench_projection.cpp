#include <benchmark/benchmark.h>

#include <cmath>

#include "rangecast/geometry.hpp"
#include "rangecast/rng.hpp"

using namespace rangecast;

namespace {

const SensorModel kFull = SensorModel::from_degrees(64, 2048, 3.0, 25.0, 80.0);

PointCloud random_cloud(size_t n, uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  for (size_t i = 0; i < n; ++i) {
    const double az = rng.uniform(-3.1, 3.1);
    const double el = rng.uniform(-kFull.fov_up + 1e-3, kFull.fov_down - 1e-3);
    const double r = rng.uniform(2.0, 75.0);
    cloud.points.push_back({r * std::cos(el) * std::cos(az),
                            r * std::cos(el) * std::sin(az), r * std::sin(el)});
  }
  return cloud;
}

}  // namespace

static void BM_ProjectPoint(benchmark::State& state) {
  const PointCloud cloud = random_cloud(10000, 1);
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(project_point(cloud.points[i], kFull));
    i = (i + 1) % cloud.points.size();
  }
}
BENCHMARK(BM_ProjectPoint);

static void BM_BuildRangeImage(benchmark::State& state) {
  const PointCloud cloud = random_cloud(static_cast<size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_range_image(cloud, kFull));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildRangeImage)->Arg(10000)->Arg(100000);

static void BM_RangeImageToCloud(benchmark::State& state) {
  const RangeImage img = build_range_image(random_cloud(100000, 3), kFull);
  const std::vector<double> mask(img.ranges.size(), 1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(range_image_to_cloud(img, mask, 0.5, kFull));
}
BENCHMARK(BM_RangeImageToCloud);
