#include <cmath>

#include "doctest.h"
#include "rangecast/synth.hpp"

using namespace rangecast;

namespace {

const SensorModel kSensor = SensorModel::from_degrees(16, 64, 15.0, 15.0, 60.0);

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size() || a.classes != b.classes) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a.points[i].x != b.points[i].x || a.points[i].y != b.points[i].y ||
        a.points[i].z != b.points[i].z)
      return false;
  return true;
}

}  // namespace

TEST_CASE("a static world renders identical frames") {
  SyntheticSceneConfig cfg;
  cfg.seed = 4;
  cfg.n_frames = 4;
  cfg.n_boxes = 0;
  const auto scans = generate_synthetic_sequence(cfg, kSensor);
  REQUIRE(scans.size() == 4);
  for (size_t i = 1; i < scans.size(); ++i)
    CHECK(same_cloud(scans[0].cloud, scans[i].cloud));
}

TEST_CASE("generation is a deterministic function of the seed") {
  SyntheticSceneConfig cfg;
  cfg.seed = 123;
  cfg.n_frames = 3;
  cfg.n_boxes = 3;
  const auto a = generate_synthetic_sequence(cfg, kSensor);
  const auto b = generate_synthetic_sequence(cfg, kSensor);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(same_cloud(a[i].cloud, b[i].cloud));

  cfg.seed = 124;
  const auto c = generate_synthetic_sequence(cfg, kSensor);
  CHECK_FALSE(same_cloud(a[0].cloud, c[0].cloud));
}

TEST_CASE("an approaching box closes range at its speed along the ray") {
  SyntheticSceneConfig cfg;
  cfg.n_frames = 6;
  cfg.n_boxes = 1;
  SyntheticScene scene;
  scene.cfg = cfg;
  MovingBox box;
  box.center = {12.0, 0.0, -0.5};
  box.half_size = {1.0, 2.0, 1.0};
  box.vx = -0.5;
  scene.boxes.push_back(box);

  // the pixel ray closest to +x
  const int u = kSensor.width_px / 2;
  const int v = kSensor.height_px / 2;
  const Point3 d = pixel_ray_direction(u, v, kSensor);

  std::vector<double> ranges;
  for (int t = 0; t < cfg.n_frames; ++t) {
    const RangeImage img = build_range_image(render_frame(scene, t, kSensor), kSensor);
    ranges.push_back(img.at(v, u));
  }
  for (int t = 0; t < cfg.n_frames; ++t) {
    const double near_face = 12.0 - 0.5 * t - 1.0;
    CHECK(ranges[t] == doctest::Approx(near_face / d.x).epsilon(1e-9));
  }
  for (size_t t = 1; t < ranges.size(); ++t)
    CHECK(ranges[t - 1] - ranges[t] == doctest::Approx(0.5 / d.x).epsilon(1e-9));
}

TEST_CASE("every valid pixel carries a class from the configured set") {
  SyntheticSceneConfig cfg;
  cfg.seed = 77;
  cfg.n_frames = 3;
  cfg.n_boxes = 2;
  const auto frames = generate_synthetic_frames(cfg, kSensor);
  REQUIRE(frames.size() == 3);
  for (const auto& frame : frames) {
    REQUIRE(frame.classes.size() == frame.image.ranges.size());
    for (size_t i = 0; i < frame.classes.size(); ++i) {
      if (frame.image.ranges[i] > 0.0) {
        CHECK(frame.classes[i] >= 0);
        CHECK(frame.classes[i] < kNumSynthClasses);
      } else {
        CHECK(frame.classes[i] == kNoReturnClass);
      }
    }
  }
}

TEST_CASE("scene config validation") {
  SyntheticSceneConfig cfg;
  cfg.n_frames = 5;
  CHECK_THROWS_AS(cfg.validate(10), ConfigError);
  cfg.n_frames = 10;
  cfg.box_speed_min = 0.6;
  cfg.box_speed_max = 0.5;
  CHECK_THROWS_AS(cfg.validate(10), ConfigError);
}
