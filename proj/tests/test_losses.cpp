#include <cmath>

#include "doctest.h"
#include "rangecast/losses.hpp"
#include "rangecast/rng.hpp"
#include "rangecast/synth.hpp"

using namespace rangecast;

namespace {

const SensorModel kToy = SensorModel::from_degrees(16, 64, 15.0, 15.0, 30.0);
const size_t kPixels = 16 * 64;

std::vector<RangeImage> zero_frames(int f) {
  return std::vector<RangeImage>(f, RangeImage(kToy));
}

}  // namespace

TEST_CASE("range loss averages absolute error over valid pixels") {
  auto gt = zero_frames(1);
  gt[0].at(2, 3) = 5.0;
  gt[0].at(9, 40) = 10.0;
  std::vector<double> pred(kPixels, 100.0);  // garbage on invalid pixels
  pred[2 * 64 + 3] = 5.4;
  pred[9 * 64 + 40] = 9.4;
  bool no_valid = true;
  const auto l = loss_range(ag::make_const({1, 16, 64}, pred), gt, &no_valid);
  CHECK(l->value[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(no_valid);

  SUBCASE("perfect prediction is exactly zero") {
    pred.assign(kPixels, 0.0);
    pred[2 * 64 + 3] = 5.0;
    pred[9 * 64 + 40] = 10.0;
    CHECK(loss_range(ag::make_const({1, 16, 64}, pred), gt)->value[0] == 0.0);
  }
  SUBCASE("the loss is homogeneous in the error") {
    pred[2 * 64 + 3] = 5.0 + 3.0 * 0.4;
    pred[9 * 64 + 40] = 10.0 - 3.0 * 0.6;
    const auto scaled = loss_range(ag::make_const({1, 16, 64}, pred), gt);
    CHECK(scaled->value[0] == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("no valid pixel yields zero and a warning flag") {
    const auto empty = loss_range(ag::make_const({1, 16, 64}, pred), zero_frames(1),
                                  &no_valid);
    CHECK(empty->value[0] == 0.0);
    CHECK(no_valid);
  }
}

TEST_CASE("mask loss closed forms") {
  SUBCASE("an indifferent mask costs ln 2") {
    const auto l = loss_mask(ag::make_const({1, 16, 64}, std::vector<double>(kPixels, 0.5)),
                             zero_frames(1));
    CHECK(l->value[0] == doctest::Approx(0.6931471805599453).epsilon(1e-14));
  }
  SUBCASE("a confidently wrong mask costs -ln(eps)") {
    auto gt = zero_frames(1);
    for (auto& r : gt[0].ranges) r = 5.0;
    const auto l = loss_mask(ag::make_const({1, 16, 64}, std::vector<double>(kPixels, 0.0)),
                             gt);
    CHECK(l->value[0] == doctest::Approx(16.11809565095832).epsilon(1e-12));
  }
}

TEST_CASE("semantic loss normalizes by channels times valid pixels") {
  const int c_s = 3;
  const std::vector<double> valid = {1.0, 0.0};  // two pixels, one valid
  std::vector<double> a(c_s * 2, 0.25), b(c_s * 2, 0.75);
  const auto l = loss_semantic(ag::make_const({c_s, 1, 2}, a),
                               ag::make_const({c_s, 1, 2}, b), valid);
  CHECK(l->value[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(loss_semantic(ag::make_const({c_s, 1, 2}, a), ag::make_const({c_s, 1, 2}, a),
                      valid)->value[0] == 0.0);
}

TEST_CASE("chamfer distance closed form and accelerated parity") {
  const PointCloud unit = {{{1, 0, 0}}, {}, {}};
  const PointCloud origin = {{{0, 0, 0}}, {}, {}};
  CHECK(chamfer_distance(unit, origin) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(chamfer_distance(unit, unit) == 0.0);
  CHECK_THROWS_AS(chamfer_distance(unit, PointCloud{}), DataError);
  CHECK_THROWS_AS(chamfer_distance_bruteforce(PointCloud{}, unit), DataError);

  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    PointCloud a, b;
    for (int i = 0; i < 200; ++i) {
      a.points.push_back({static_cast<float>(rng.uniform(-10, 10)),
                          static_cast<float>(rng.uniform(-10, 10)),
                          static_cast<float>(rng.uniform(-2, 2))});
      b.points.push_back({static_cast<float>(rng.uniform(-10, 10)),
                          static_cast<float>(rng.uniform(-10, 10)),
                          static_cast<float>(rng.uniform(-2, 2))});
    }
    CHECK(std::abs(chamfer_distance(a, b) - chamfer_distance_bruteforce(a, b)) <= 1e-9);
  }
}

TEST_CASE("frame chamfer matches the geometric closed form") {
  std::vector<double> pred(kPixels, 0.0);
  pred[6 * 64 + 17] = 6.0;
  std::vector<double> mask(kPixels, 0.0);
  mask[6 * 64 + 17] = 0.9;
  PointCloud gt;
  gt.points.push_back(unproject_pixel(17, 6, 5.0, kToy));

  const ChamferGraphOptions opt;
  const auto node = chamfer_frame_loss(ag::make_const({1, 16, 64}, pred), 0, mask, gt,
                                       kToy, opt, nullptr);
  REQUIRE(node != nullptr);
  CHECK(node->value[0] == doctest::Approx(2.0).epsilon(1e-9));

  SUBCASE("a fully gated-off mask yields no loss term") {
    CHECK(chamfer_frame_loss(ag::make_const({1, 16, 64}, pred), 0,
                             std::vector<double>(kPixels, 0.0), gt, kToy, opt,
                             nullptr) == nullptr);
  }
  SUBCASE("an empty ground-truth cloud yields no loss term") {
    CHECK(chamfer_frame_loss(ag::make_const({1, 16, 64}, pred), 0, mask, PointCloud{},
                             kToy, opt, nullptr) == nullptr);
  }
}

TEST_CASE("total loss composes in a fixed order") {
  const LossWeights w{0.3, 1.7};
  const double lr = 0.11, lm = 0.23, ls = 0.47, lc = 3.9;
  const double expected = ((lr + lm) + 0.3 * ls) + 1.7 * lc;
  CHECK(total_loss(lr, lm, ls, lc, w) == expected);
  const auto node = total_loss(ag::make_scalar(lr), ag::make_scalar(lm),
                               ag::make_scalar(ls), ag::make_scalar(lc), w);
  CHECK(node->value[0] == expected);
}

TEST_CASE("semantic similarity of a uniform predictor") {
  // two pixels, two classes, both probabilities one half
  const std::vector<double> pred = {0.5, 0.5, 0.5, 0.5};
  const std::vector<int32_t> labels = {0, 1};
  const auto sim = semantic_similarity(pred, 2, labels);
  CHECK(sim.value == doctest::Approx(2.8853900817779268).epsilon(1e-14));
  CHECK_FALSE(sim.capped);

  SUBCASE("a validity mask rescales the numerator") {
    const std::vector<uint8_t> valid = {1, 0};
    const auto masked = semantic_similarity(pred, 2, labels, &valid);
    CHECK(masked.value == doctest::Approx(2.8853900817779268).epsilon(1e-14));
  }
  SUBCASE("a near-perfect predictor hits the cap") {
    const std::vector<double> sharp = {1.0, 0.0, 0.0, 1.0};
    const auto capped = semantic_similarity(sharp, 2, labels, nullptr, 1e-12);
    CHECK(capped.capped);
    CHECK(capped.value == kSemanticSimilarityCap);
  }
}

TEST_CASE("copy-last baseline repeats the final frame") {
  auto past = zero_frames(3);
  past[2].at(4, 4) = 7.0;
  past[2].at(5, 5) = 9.0;
  const FramePrediction pred = baseline_copy_last(past, 2);
  REQUIRE(pred.ranges.size() == 2);
  REQUIRE(pred.mask_probs.size() == 2);
  for (int f = 0; f < 2; ++f) {
    CHECK(pred.ranges[f].ranges == past[2].ranges);
    for (size_t i = 0; i < kPixels; ++i)
      CHECK(pred.mask_probs[f][i] == (past[2].ranges[i] > 0.0 ? 1.0 : 0.0));
  }
}

TEST_CASE("copy-last is exact on a static world") {
  SyntheticSceneConfig cfg;
  cfg.seed = 2;
  cfg.n_frames = 6;
  cfg.n_boxes = 0;
  const auto frames = generate_synthetic_frames(cfg, kToy);
  std::vector<RangeImage> past;
  for (int i = 0; i < 3; ++i) past.push_back(frames[i].image);
  const FramePrediction pred = baseline_copy_last(past, 3);
  for (int f = 0; f < 3; ++f) CHECK(pred.ranges[f].ranges == frames[3 + f].image.ranges);
}
