#include <benchmark/benchmark.h>

#include "rangecast/model.hpp"
#include "rangecast/rng.hpp"

using namespace rangecast;

namespace {

std::vector<RangeImage> random_past(const ModelConfig& cfg, uint64_t seed) {
  const SensorModel sensor = SensorModel::from_degrees(
      cfg.input_height, cfg.input_width, 15.0, 15.0, cfg.max_range);
  Rng rng(seed);
  std::vector<RangeImage> past;
  for (int t = 0; t < cfg.past_frames; ++t) {
    RangeImage img(sensor);
    for (auto& r : img.ranges)
      r = rng.uniform(0, 1) < 0.2 ? 0.0 : rng.uniform(1.0, cfg.max_range * 0.9);
    past.push_back(std::move(img));
  }
  return past;
}

}  // namespace

static void BM_ToyForward(benchmark::State& state) {
  const ModelConfig cfg;  // 5 -> 5, 16x64
  PredictorModel model(cfg);
  const auto past = random_past(cfg, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(past, false));
}
BENCHMARK(BM_ToyForward);

static void BM_ToyForwardBackward(benchmark::State& state) {
  const ModelConfig cfg;
  PredictorModel model(cfg);
  const auto past = random_past(cfg, 2);
  for (auto _ : state) {
    const ag::NodePtr x = model.make_input(past);
    const ModelOutput out = model.forward(x, true);
    model.store().zero_grad();
    ag::backward(ag::add(ag::mean_all(out.range_pred), ag::mean_all(out.mask_prob)));
  }
}
BENCHMARK(BM_ToyForwardBackward);

BENCHMARK_MAIN();
