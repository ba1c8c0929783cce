#include <cmath>

#include "doctest.h"
#include "rangecast/geometry.hpp"
#include "rangecast/rng.hpp"

using namespace rangecast;

namespace {

const SensorModel kKittiLike = SensorModel::from_degrees(64, 2048, 3.0, 25.0, 80.0);
const SensorModel kToy = SensorModel::from_degrees(16, 64, 15.0, 15.0, 30.0);

Point3 random_in_fov(const SensorModel& s, Rng& rng) {
  const double az = rng.uniform(-M_PI + 1e-3, M_PI - 1e-3);
  // elevations mapping inside [0, h) run from -fov_up to fov_down
  const double el = rng.uniform(-s.fov_up + 1e-3, s.fov_down - 1e-3);
  const double r = rng.uniform(1.0, s.max_range * 0.95);
  return {r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az),
          r * std::sin(el)};
}

}  // namespace

TEST_CASE("symmetric FOV centers an x-axis point") {
  const auto px = project_point({5.0, 0.0, 0.0}, kToy);
  REQUIRE(px.has_value());
  CHECK(px->u == kToy.width_px / 2);
  CHECK(px->v == kToy.height_px / 2);
  CHECK(px->range == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("projection of (10,10,0) under the 64x2048 3/25-degree sensor") {
  const auto cont = project_point_continuous({10.0, 10.0, 0.0}, kKittiLike);
  REQUIRE(cont.has_value());
  CHECK(cont->u == doctest::Approx(768.0).epsilon(1e-12));
  CHECK(cont->v == doctest::Approx(57.14285714285714).epsilon(1e-12));
  CHECK(cont->range == doctest::Approx(14.142135623730951).epsilon(1e-12));
  const auto px = project_point({10.0, 10.0, 0.0}, kKittiLike);
  REQUIRE(px.has_value());
  CHECK(px->u == 768);
  CHECK(px->v == 57);
}

TEST_CASE("azimuth pi maps to the left edge") {
  const auto px = project_point({-5.0, 0.0, 0.0}, kToy);
  REQUIRE(px.has_value());
  CHECK(px->u == 0);
}

TEST_CASE("projection rejects the origin and drops out-of-range points") {
  CHECK_THROWS_AS(project_point({0.0, 0.0, 0.0}, kToy), ContractViolation);
  CHECK_FALSE(project_point({100.0, 0.0, 0.0}, kToy).has_value());  // r > r_max
  CHECK_FALSE(project_point({1.0, 0.0, 5.0}, kToy).has_value());    // above FOV
  CHECK_THROWS_AS(unproject_pixel(0, 0, 0.0, kToy), ContractViolation);
}

TEST_CASE("pixel-center round trip is exact") {
  for (int v = 0; v < kToy.height_px; ++v)
    for (int u = 0; u < kToy.width_px; ++u)
      for (double r : {0.5, 7.25, 29.0}) {
        const Point3 p = unproject_pixel(u, v, r, kToy);
        const auto px = project_point(p, kToy);
        REQUIRE(px.has_value());
        CHECK(px->u == u);
        CHECK(px->v == v);
        CHECK(std::abs(px->range - r) < 1e-9 * r);
      }
}

TEST_CASE("continuous projection inverts exactly") {
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Point3 p = random_in_fov(kKittiLike, rng);
    const auto cont = project_point_continuous(p, kKittiLike);
    REQUIRE(cont.has_value());
    const Point3 back = unproject_continuous(cont->u, cont->v, cont->range, kKittiLike);
    const double err = std::hypot(back.x - p.x, back.y - p.y, back.z - p.z);
    const double norm = std::hypot(p.x, p.y, p.z);
    CHECK(err < 1e-6 * norm);
  }
}

TEST_CASE("azimuth is periodic") {
  Rng rng(7);
  const double c = std::cos(2.0 * M_PI), s = std::sin(2.0 * M_PI);
  for (int i = 0; i < 200; ++i) {
    const Point3 p = random_in_fov(kToy, rng);
    const Point3 q{c * p.x - s * p.y, s * p.x + c * p.y, p.z};
    const auto a = project_point(p, kToy);
    const auto b = project_point(q, kToy);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->u == b->u);
    CHECK(a->v == b->v);
  }
}

TEST_CASE("z-buffer keeps the nearest point per pixel") {
  SUBCASE("two points on one ray") {
    const Point3 dir = pixel_ray_direction(10, 5, kToy);
    PointCloud cloud;
    cloud.points.push_back({dir.x * 9.0, dir.y * 9.0, dir.z * 9.0});
    cloud.points.push_back({dir.x * 4.0, dir.y * 4.0, dir.z * 4.0});
    const RangeImage img = build_range_image(cloud, kToy);
    CHECK(img.at(5, 10) == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("empty cloud gives all zeros") {
    const RangeImage img = build_range_image(PointCloud{}, kToy);
    for (double r : img.ranges) CHECK(r == 0.0);
  }
  SUBCASE("matches brute-force re-binning on a random cloud") {
    Rng rng(3);
    PointCloud cloud;
    for (int i = 0; i < 500; ++i) cloud.points.push_back(random_in_fov(kToy, rng));
    const RangeImage img = build_range_image(cloud, kToy);
    std::vector<double> expected(img.ranges.size(), 0.0);
    for (const auto& p : cloud.points) {
      const auto px = project_point(p, kToy);
      if (!px) continue;
      double& cell = expected[static_cast<size_t>(px->v) * kToy.width_px + px->u];
      if (cell == 0.0 || px->range < cell) cell = px->range;
    }
    for (size_t i = 0; i < expected.size(); ++i) CHECK(img.ranges[i] == expected[i]);
  }
}

TEST_CASE("three points in distinct pixels survive rasterization") {
  PointCloud cloud;
  std::vector<double> ranges = {3.0, 11.0, 20.0};
  const int pixels[3][2] = {{4, 2}, {40, 9}, {63, 15}};
  for (int i = 0; i < 3; ++i)
    cloud.points.push_back(unproject_pixel(pixels[i][0], pixels[i][1], ranges[i], kToy));
  const RangeImage img = build_range_image(cloud, kToy);
  int nonzero = 0;
  for (double r : img.ranges) nonzero += r > 0.0;
  CHECK(nonzero == 3);
  for (int i = 0; i < 3; ++i)
    CHECK(img.at(pixels[i][1], pixels[i][0]) == doctest::Approx(ranges[i]).epsilon(1e-12));
}

TEST_CASE("labeled rasterization keeps the retained point's class") {
  const Point3 dir = pixel_ray_direction(20, 8, kToy);
  PointCloud cloud;
  cloud.points.push_back({dir.x * 9.0, dir.y * 9.0, dir.z * 9.0});
  cloud.points.push_back({dir.x * 4.0, dir.y * 4.0, dir.z * 4.0});
  cloud.classes = {7, 2};
  const LabeledRangeImage img = build_range_image_labeled(cloud, kToy);
  CHECK(img.image.at(8, 20) == doctest::Approx(4.0));
  CHECK(img.classes[8 * kToy.width_px + 20] == 2);
  CHECK(img.classes[0] == kNoReturnClass);
}

TEST_CASE("mask-gated re-projection") {
  RangeImage img(kToy);
  const size_t n = img.ranges.size();
  SUBCASE("zero ranges give an empty cloud even with mask 1") {
    CHECK(range_image_to_cloud(img, std::vector<double>(n, 1.0), 0.5, kToy).size() == 0);
  }
  SUBCASE("mask below threshold gives an empty cloud") {
    for (auto& r : img.ranges) r = 5.0;
    CHECK(range_image_to_cloud(img, std::vector<double>(n, 0.4), 0.5, kToy).size() == 0);
  }
  SUBCASE("a single gated pixel unprojects at its center") {
    img.at(6, 17) = 5.0;
    std::vector<double> mask(n, 0.0);
    mask[6 * kToy.width_px + 17] = 0.9;
    const PointCloud cloud = range_image_to_cloud(img, mask, 0.5, kToy);
    REQUIRE(cloud.size() == 1);
    const Point3 want = unproject_pixel(17, 6, 5.0, kToy);
    CHECK(cloud.points[0].x == want.x);
    CHECK(cloud.points[0].y == want.y);
    CHECK(cloud.points[0].z == want.z);
  }
  SUBCASE("dimension mismatch and bad threshold are contract violations") {
    CHECK_THROWS_AS(range_image_to_cloud(img, std::vector<double>(n - 1, 1.0), 0.5, kToy),
                    ContractViolation);
    CHECK_THROWS_AS(range_image_to_cloud(img, std::vector<double>(n, 1.0), 1.5, kToy),
                    ContractViolation);
  }
}
