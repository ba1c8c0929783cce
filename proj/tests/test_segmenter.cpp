#include <cmath>

#include "doctest.h"
#include "rangecast/gradcheck.hpp"
#include "rangecast/segmenter.hpp"

using namespace rangecast;

namespace {

const SensorModel kToy = SensorModel::from_degrees(16, 64, 15.0, 15.0, 30.0);

SegmenterConfig small_config() {
  SegmenterConfig cfg;
  cfg.widths = {8};
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("label mapping routes no-return pixels to the last channel") {
  const SegmenterConfig cfg;
  const auto mapped = segmenter_labels({0, 2, kNoReturnClass, 1}, cfg);
  CHECK(mapped == std::vector<int32_t>{0, 2, no_return_channel(cfg), 1});
  CHECK(no_return_channel(cfg) == 3);
}

TEST_CASE("segmenter outputs are per-pixel probability distributions") {
  Segmenter seg(small_config());
  RangeImage img(kToy);
  Rng rng(4);
  for (auto& r : img.ranges) r = rng.uniform(0, 1) < 0.3 ? 0.0 : rng.uniform(1, 25);
  const std::vector<double> probs = seg.segment(img);
  const int c_s = seg.config().num_classes;
  REQUIRE(probs.size() == static_cast<size_t>(c_s) * img.ranges.size());
  for (size_t px = 0; px < img.ranges.size(); ++px) {
    double sum = 0.0;
    for (int c = 0; c < c_s; ++c) {
      const double p = probs[c * img.ranges.size() + px];
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("a constant input segments every column identically") {
  // zero padding along height makes border rows differ; circular padding
  // along width must not
  Segmenter seg(small_config());
  RangeImage img(kToy);
  for (auto& r : img.ranges) r = 10.0;
  const std::vector<double> probs = seg.segment(img);
  const size_t n = img.ranges.size();
  const int w = kToy.width_px;
  for (int c = 0; c < seg.config().num_classes; ++c)
    for (int v = 0; v < kToy.height_px; ++v) {
      const size_t row = c * n + static_cast<size_t>(v) * w;
      for (int u = 1; u < w; ++u) CHECK(probs[row + u] == probs[row]);
    }
  // rows beyond every conv's height reach are identical
  const size_t mid_a = 7 * static_cast<size_t>(w), mid_b = 8 * static_cast<size_t>(w);
  for (int c = 0; c < seg.config().num_classes; ++c)
    CHECK(probs[c * n + mid_a] == doctest::Approx(probs[c * n + mid_b]).epsilon(1e-12));
}

TEST_CASE("a frozen segmenter is bit-stable") {
  Segmenter seg(small_config());
  seg.freeze();
  CHECK(seg.frozen());
  RangeImage img(kToy);
  for (size_t i = 0; i < img.ranges.size(); ++i) img.ranges[i] = (i % 7) * 3.5;
  CHECK(seg.segment(img) == seg.segment(img));
  for (const auto& [name, param] : seg.store().params())
    CHECK_FALSE(param->requires_grad);
}

TEST_CASE("pretraining separates the synthetic classes") {
  SyntheticSceneConfig scene;
  scene.seed = 5;
  scene.n_frames = 10;
  scene.n_boxes = 2;
  const auto frames = generate_synthetic_frames(scene, kToy);
  const std::vector<LabeledRangeImage> train(frames.begin(), frames.begin() + 8);
  const std::vector<LabeledRangeImage> heldout(frames.begin() + 8, frames.end());

  SegmenterConfig cfg;
  cfg.seed = 3;
  Segmenter seg(cfg);
  const PretrainResult result = pretrain_segmenter(seg, train, heldout, 3, 1e-2);
  CHECK(result.heldout_accuracy >= 0.80);
  CHECK(seg.frozen());
  REQUIRE(result.loss_per_epoch.size() == 3);
  CHECK(result.loss_per_epoch.back() < result.loss_per_epoch.front());
  CHECK(segmenter_accuracy(seg, heldout) == doctest::Approx(result.heldout_accuracy));
}

TEST_CASE("auxiliary loss vanishes when the prediction equals the target") {
  Segmenter seg(small_config());
  seg.freeze();
  SyntheticSceneConfig scene;
  scene.seed = 6;
  scene.n_frames = 2;
  const auto frames = generate_synthetic_frames(scene, kToy);
  std::vector<RangeImage> gt = {frames[0].image, frames[1].image};

  ModelOutput out;
  std::vector<double> values;
  std::vector<double> mask;
  for (const auto& img : gt)
    for (double r : img.ranges) {
      values.push_back(r);
      mask.push_back(r > 0.0 ? 1.0 : 0.0);
    }
  out.range_pred = ag::make_const({2, 16, 64}, values);
  out.mask_prob = ag::make_const({2, 16, 64}, mask);

  Rng rng(7);
  int chosen = -1;
  const auto l = aux_semantic_loss(out, gt, seg, rng, &chosen);
  CHECK(l->value[0] <= 1e-12);
  CHECK(chosen >= 0);
  CHECK(chosen < 2);

  Rng again(7);
  int chosen2 = -1;
  aux_semantic_loss(out, gt, seg, again, &chosen2);
  CHECK(chosen2 == chosen);
}

TEST_CASE("segmenter gradients agree with finite differences") {
  Segmenter seg(small_config());
  RangeImage img(kToy);
  Rng fill(9);
  for (auto& r : img.ranges) r = fill.uniform(0, 1) < 0.3 ? 0.0 : fill.uniform(1, 25);
  std::vector<int32_t> labels(img.ranges.size());
  for (size_t i = 0; i < labels.size(); ++i)
    labels[i] = img.ranges[i] > 0.0 ? static_cast<int32_t>(i % 3) : kNoReturnClass;

  std::vector<ag::NodePtr> leaves;
  for (const auto& [name, param] : seg.store().params()) leaves.push_back(param);
  auto loss = [&]() {
    const auto probs = seg.forward(seg.make_input(img));
    std::vector<int64_t> picks;
    const int64_t n = static_cast<int64_t>(img.ranges.size());
    for (int64_t i = 0; i < n; i += 97)
      picks.push_back(segmenter_labels(labels, seg.config())[i] * n + i);
    return ag::mul_scalar(ag::sum_all(ag::log_op(ag::clamp(ag::gather_flat(probs, picks),
                                                           1e-12, 1.0))),
                          -1.0);
  };
  Rng rng(10);
  const double err = ag::finite_diff_rel_err(loss, leaves, 1e-4, 2, rng);
  CHECK(err < 1e-3);
}

TEST_CASE("segmenter config validation and hashing") {
  SegmenterConfig cfg;
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  SegmenterConfig a, b;
  b.widths = {16, 16};
  CHECK(segmenter_config_hash(a) != segmenter_config_hash(b));
  CHECK(segmenter_config_hash(a) == segmenter_config_hash(SegmenterConfig{}));
}
