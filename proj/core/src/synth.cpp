#include "rangecast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rangecast/rng.hpp"

namespace rangecast {

void SyntheticSceneConfig::validate(int min_frames) const {
  if (n_frames < min_frames)
    throw ConfigError("synthetic scene: n_frames must be >= " + std::to_string(min_frames));
  if (n_boxes < 0) throw ConfigError("synthetic scene: n_boxes must be >= 0");
  if (world_extent <= 1.0) throw ConfigError("synthetic scene: world_extent too small");
  if (box_speed_max < box_speed_min || box_speed_min < 0.0)
    throw ConfigError("synthetic scene: invalid box speed range");
  if (ground_z >= 0.0 || wall_top_z <= 0.0)
    throw ConfigError("synthetic scene: sensor must sit between ground and wall top");
}

SyntheticScene make_scene(const SyntheticSceneConfig& cfg) {
  cfg.validate(1);
  SyntheticScene scene;
  scene.cfg = cfg;
  Rng rng(cfg.seed);
  for (int i = 0; i < cfg.n_boxes; ++i) {
    MovingBox box;
    box.half_size = Point3{rng.uniform(0.4, 1.2), rng.uniform(0.4, 1.2),
                           rng.uniform(0.5, 1.5)};
    // Boxes sit on the ground.
    box.center.z = cfg.ground_z + box.half_size.z;

    const double speed = rng.uniform(cfg.box_speed_min, cfg.box_speed_max);
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    box.vx = speed * std::cos(heading);
    box.vy = speed * std::sin(heading);

    // Keep the full trajectory inside the room: sample a start so that both
    // endpoints of the linear motion stay within 85% of the extent.
    const double margin = 0.85 * cfg.world_extent;
    const double travel_x = box.vx * (cfg.n_frames - 1);
    const double travel_y = box.vy * (cfg.n_frames - 1);
    const double lo_x = -margin + std::max(0.0, -travel_x);
    const double hi_x = margin - std::max(0.0, travel_x);
    const double lo_y = -margin + std::max(0.0, -travel_y);
    const double hi_y = margin - std::max(0.0, travel_y);
    box.center.x = rng.uniform(std::min(lo_x, hi_x), std::max(lo_x, hi_x));
    box.center.y = rng.uniform(std::min(lo_y, hi_y), std::max(lo_y, hi_y));
    scene.boxes.push_back(box);
  }
  return scene;
}

namespace {

struct Hit {
  double t = std::numeric_limits<double>::max();
  int32_t cls = kNoReturnClass;
};

void hit_ground(const Point3& dir, const SyntheticSceneConfig& cfg, Hit& best) {
  if (dir.z >= 0.0) return;
  const double t = cfg.ground_z / dir.z;
  const double x = t * dir.x, y = t * dir.y;
  if (std::abs(x) <= cfg.world_extent && std::abs(y) <= cfg.world_extent && t < best.t)
    best = Hit{t, kClassGround};
}

void hit_walls(const Point3& dir, const SyntheticSceneConfig& cfg, Hit& best) {
  const double ext = cfg.world_extent;
  auto check = [&](double t, double lateral, double z) {
    if (t > 0.0 && std::abs(lateral) <= ext && z >= cfg.ground_z &&
        z <= cfg.wall_top_z && t < best.t)
      best = Hit{t, kClassWall};
  };
  if (dir.x != 0.0) {
    double t = ext / dir.x;
    check(t, t * dir.y, t * dir.z);
    t = -ext / dir.x;
    check(t, t * dir.y, t * dir.z);
  }
  if (dir.y != 0.0) {
    double t = ext / dir.y;
    check(t, t * dir.x, t * dir.z);
    t = -ext / dir.y;
    check(t, t * dir.x, t * dir.z);
  }
}

void hit_box(const Point3& dir, const MovingBox& box, int frame, Hit& best) {
  const double cx = box.center.x + box.vx * frame;
  const double cy = box.center.y + box.vy * frame;
  const double cz = box.center.z;
  double t_enter = 0.0;
  double t_exit = std::numeric_limits<double>::max();
  const double c[3] = {cx, cy, cz};
  const double h[3] = {box.half_size.x, box.half_size.y, box.half_size.z};
  const double d[3] = {dir.x, dir.y, dir.z};
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (std::abs(c[a]) > h[a]) return;  // ray origin (0) outside the slab
      continue;
    }
    double t0 = (c[a] - h[a]) / d[a];
    double t1 = (c[a] + h[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return;
  }
  if (t_enter > 0.0 && t_enter < best.t) best = Hit{t_enter, kClassBox};
}

}  // namespace

PointCloud render_frame(const SyntheticScene& scene, int frame,
                        const SensorModel& sensor) {
  PointCloud cloud;
  for (int v = 0; v < sensor.height_px; ++v) {
    for (int u = 0; u < sensor.width_px; ++u) {
      const Point3 dir = pixel_ray_direction(u, v, sensor);
      Hit best;
      hit_ground(dir, scene.cfg, best);
      hit_walls(dir, scene.cfg, best);
      for (const auto& box : scene.boxes) hit_box(dir, box, frame, best);
      if (best.cls == kNoReturnClass || best.t > sensor.max_range) continue;
      cloud.points.push_back(Point3{dir.x * best.t, dir.y * best.t, dir.z * best.t});
      cloud.classes.push_back(best.cls);
    }
  }
  return cloud;
}

std::vector<ScanRecord> generate_synthetic_sequence(const SyntheticSceneConfig& cfg,
                                                    const SensorModel& sensor) {
  const SyntheticScene scene = make_scene(cfg);
  std::vector<ScanRecord> records;
  records.reserve(cfg.n_frames);
  for (int t = 0; t < cfg.n_frames; ++t) {
    ScanRecord rec;
    rec.cloud = render_frame(scene, t, sensor);
    rec.frame_index = t;
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<LabeledRangeImage> generate_synthetic_frames(const SyntheticSceneConfig& cfg,
                                                         const SensorModel& sensor) {
  const SyntheticScene scene = make_scene(cfg);
  std::vector<LabeledRangeImage> frames;
  frames.reserve(cfg.n_frames);
  for (int t = 0; t < cfg.n_frames; ++t)
    frames.push_back(build_range_image_labeled(render_frame(scene, t, sensor), sensor));
  return frames;
}

}  // namespace rangecast
