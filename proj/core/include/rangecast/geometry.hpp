#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rangecast/errors.hpp"

namespace rangecast {

/// Intrinsics of a virtual spinning LiDAR.
struct SensorModel {
  int height_px = 64;
  int width_px = 2048;
  double fov_up = 0.0;    // radians above horizontal, positive
  double fov_down = 0.0;  // radians below horizontal, positive
  double max_range = 0.0; // meters

  double fov() const { return fov_up + fov_down; }
  void validate() const;

  static SensorModel from_degrees(int h, int w, double fov_up_deg,
                                  double fov_down_deg, double max_range);
};

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

constexpr int32_t kNoReturnClass = -1;

/// Unordered scan in the sensor-local frame. intensity/classes are either
/// empty or per-point.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<float> intensity;
  std::vector<int32_t> classes;

  size_t size() const { return points.size(); }
};

struct PixelCoord {
  int u = 0;  // column
  int v = 0;  // row
  double range = 0.0;
};

struct ContinuousProjection {
  double u = 0.0;
  double v = 0.0;
  double range = 0.0;
};

/// H x W grid of ranges in meters; 0 encodes "no return".
struct RangeImage {
  SensorModel sensor;
  std::vector<double> ranges;  // row-major, size h*w

  RangeImage() = default;
  explicit RangeImage(const SensorModel& s)
      : sensor(s), ranges(static_cast<size_t>(s.height_px) * s.width_px, 0.0) {}

  int height() const { return sensor.height_px; }
  int width() const { return sensor.width_px; }
  double& at(int v, int u) { return ranges[static_cast<size_t>(v) * sensor.width_px + u]; }
  double at(int v, int u) const { return ranges[static_cast<size_t>(v) * sensor.width_px + u]; }
};

/// Range image plus a per-pixel class grid (kNoReturnClass where no return).
struct LabeledRangeImage {
  RangeImage image;
  std::vector<int32_t> classes;
};

/// Spherical projection to continuous image coordinates. Empty when the
/// point leaves the vertical FOV or exceeds max_range. Throws
/// ContractViolation for the origin or non-finite input.
std::optional<ContinuousProjection> project_point_continuous(const Point3& p,
                                                             const SensorModel& sensor);

/// Continuous projection floored to pixel indices; u wraps modulo width.
std::optional<PixelCoord> project_point(const Point3& p, const SensorModel& sensor);

/// Inverse projection at the pixel center (u+0.5, v+0.5).
Point3 unproject_pixel(int u, int v, double r, const SensorModel& sensor);

/// Inverse projection at exact continuous image coordinates.
Point3 unproject_continuous(double u, double v, double r, const SensorModel& sensor);

/// Unit direction of the ray through the center of pixel (u, v).
Point3 pixel_ray_direction(int u, int v, const SensorModel& sensor);

/// Z-buffered rasterization: each pixel keeps the nearest projecting point.
RangeImage build_range_image(const PointCloud& cloud, const SensorModel& sensor);

/// Same, additionally keeping the retained point's class id per pixel.
LabeledRangeImage build_range_image_labeled(const PointCloud& cloud,
                                            const SensorModel& sensor);

/// Mask-gated re-projection: one point per pixel with mask_prob > threshold
/// and range > 0, in row-major order.
PointCloud range_image_to_cloud(const RangeImage& ranges,
                                const std::vector<double>& mask_probs,
                                double threshold, const SensorModel& sensor);

/// All valid pixels re-projected (mask = validity).
PointCloud range_image_to_cloud(const RangeImage& ranges, const SensorModel& sensor);

}  // namespace rangecast
