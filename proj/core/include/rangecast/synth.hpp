#pragma once

#include <cstdint>
#include <vector>

#include "rangecast/dataio.hpp"
#include "rangecast/geometry.hpp"

namespace rangecast {

// Synthetic class ids. kNoReturnClass marks empty pixels; the segmenter
// label space appends a dedicated no-return channel after these.
enum SynthClass : int32_t {
  kClassGround = 0,
  kClassWall = 1,
  kClassBox = 2,
};
constexpr int kNumSynthClasses = 3;

/// Deterministic desk-scale world: a ground plane, four boundary walls, and
/// n_boxes linearly moving axis-aligned boxes observed by a sensor at the
/// origin.
struct SyntheticSceneConfig {
  uint64_t seed = 0;
  int n_frames = 10;
  int n_boxes = 2;
  double box_speed_min = 0.1;  // m/frame
  double box_speed_max = 0.5;  // m/frame
  double world_extent = 20.0;  // half-width of the square room, meters
  double ground_z = -1.5;      // sensor sits at the origin
  double wall_top_z = 2.5;

  void validate(int min_frames) const;
};

struct MovingBox {
  Point3 center;    // at frame 0
  Point3 half_size;
  double vx = 0.0, vy = 0.0;  // m/frame
};

/// The sampled world realization; deterministic function of cfg.seed.
struct SyntheticScene {
  SyntheticSceneConfig cfg;
  std::vector<MovingBox> boxes;
};

SyntheticScene make_scene(const SyntheticSceneConfig& cfg);

/// Exact ray cast of frame t: one ray per range-image pixel, nearest hit
/// wins, hit class recorded per point.
PointCloud render_frame(const SyntheticScene& scene, int frame,
                        const SensorModel& sensor);

/// All frames of the scene as labeled scans.
std::vector<ScanRecord> generate_synthetic_sequence(const SyntheticSceneConfig& cfg,
                                                    const SensorModel& sensor);

/// Same sequence pre-projected to labeled range images.
std::vector<LabeledRangeImage> generate_synthetic_frames(const SyntheticSceneConfig& cfg,
                                                         const SensorModel& sensor);

}  // namespace rangecast
