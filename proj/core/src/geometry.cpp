#include "rangecast/geometry.hpp"

#include <cmath>

namespace rangecast {

void SensorModel::validate() const {
  if (height_px < 1 || width_px < 1)
    throw ContractViolation("SensorModel: image dims must be >= 1");
  if (fov_up + fov_down <= 0.0)
    throw ContractViolation("SensorModel: fov_up + fov_down must be > 0");
  if (max_range <= 0.0)
    throw ContractViolation("SensorModel: max_range must be > 0");
}

SensorModel SensorModel::from_degrees(int h, int w, double fov_up_deg,
                                      double fov_down_deg, double max_range) {
  SensorModel s;
  s.height_px = h;
  s.width_px = w;
  s.fov_up = fov_up_deg * M_PI / 180.0;
  s.fov_down = fov_down_deg * M_PI / 180.0;
  s.max_range = max_range;
  s.validate();
  return s;
}

std::optional<ContinuousProjection> project_point_continuous(const Point3& p,
                                                             const SensorModel& sensor) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
    throw ContractViolation("project_point: non-finite coordinates");
  const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  if (r <= 0.0)
    throw ContractViolation("project_point: origin has no direction");
  if (r > sensor.max_range) return std::nullopt;

  const double azimuth = std::atan2(p.y, p.x);
  const double elevation = std::asin(p.z / r);

  ContinuousProjection c;
  c.u = 0.5 * (1.0 - azimuth / M_PI) * sensor.width_px;
  c.v = (1.0 - (elevation + sensor.fov_up) / sensor.fov()) * sensor.height_px;
  c.range = r;
  if (c.v < 0.0 || c.v >= sensor.height_px) return std::nullopt;
  return c;
}

std::optional<PixelCoord> project_point(const Point3& p, const SensorModel& sensor) {
  auto c = project_point_continuous(p, sensor);
  if (!c) return std::nullopt;
  const int w = sensor.width_px;
  int u = static_cast<int>(std::floor(c->u));
  u = ((u % w) + w) % w;  // azimuth is periodic
  const int v = static_cast<int>(std::floor(c->v));
  if (v < 0 || v >= sensor.height_px) return std::nullopt;
  return PixelCoord{u, v, c->range};
}

Point3 unproject_continuous(double u, double v, double r, const SensorModel& sensor) {
  if (r <= 0.0) throw ContractViolation("unproject: range must be > 0");
  const double azimuth = M_PI * (1.0 - 2.0 * u / sensor.width_px);
  const double elevation = sensor.fov() * (1.0 - v / sensor.height_px) - sensor.fov_up;
  Point3 p;
  p.x = r * std::cos(elevation) * std::cos(azimuth);
  p.y = r * std::cos(elevation) * std::sin(azimuth);
  p.z = r * std::sin(elevation);
  return p;
}

Point3 unproject_pixel(int u, int v, double r, const SensorModel& sensor) {
  if (u < 0 || u >= sensor.width_px || v < 0 || v >= sensor.height_px)
    throw ContractViolation("unproject_pixel: pixel outside image");
  return unproject_continuous(u + 0.5, v + 0.5, r, sensor);
}

Point3 pixel_ray_direction(int u, int v, const SensorModel& sensor) {
  return unproject_pixel(u, v, 1.0, sensor);
}

RangeImage build_range_image(const PointCloud& cloud, const SensorModel& sensor) {
  RangeImage img(sensor);
  for (const auto& p : cloud.points) {
    auto px = project_point(p, sensor);
    if (!px) continue;
    double& cell = img.at(px->v, px->u);
    if (cell == 0.0 || px->range < cell) cell = px->range;
  }
  return img;
}

LabeledRangeImage build_range_image_labeled(const PointCloud& cloud,
                                            const SensorModel& sensor) {
  LabeledRangeImage out;
  out.image = RangeImage(sensor);
  out.classes.assign(out.image.ranges.size(), kNoReturnClass);
  const bool has_classes = !cloud.classes.empty();
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    auto px = project_point(cloud.points[i], sensor);
    if (!px) continue;
    double& cell = out.image.at(px->v, px->u);
    if (cell == 0.0 || px->range < cell) {
      cell = px->range;
      out.classes[static_cast<size_t>(px->v) * sensor.width_px + px->u] =
          has_classes ? cloud.classes[i] : kNoReturnClass;
    }
  }
  return out;
}

PointCloud range_image_to_cloud(const RangeImage& ranges,
                                const std::vector<double>& mask_probs,
                                double threshold, const SensorModel& sensor) {
  if (mask_probs.size() != ranges.ranges.size())
    throw ContractViolation("range_image_to_cloud: mask/range dimension mismatch");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ContractViolation("range_image_to_cloud: threshold must be in (0,1)");
  PointCloud cloud;
  for (int v = 0; v < ranges.height(); ++v) {
    for (int u = 0; u < ranges.width(); ++u) {
      const size_t idx = static_cast<size_t>(v) * ranges.width() + u;
      const double r = ranges.ranges[idx];
      if (r > 0.0 && mask_probs[idx] > threshold)
        cloud.points.push_back(unproject_pixel(u, v, r, sensor));
    }
  }
  return cloud;
}

PointCloud range_image_to_cloud(const RangeImage& ranges, const SensorModel& sensor) {
  PointCloud cloud;
  for (int v = 0; v < ranges.height(); ++v)
    for (int u = 0; u < ranges.width(); ++u) {
      const double r = ranges.at(v, u);
      if (r > 0.0) cloud.points.push_back(unproject_pixel(u, v, r, sensor));
    }
  return cloud;
}

}  // namespace rangecast
