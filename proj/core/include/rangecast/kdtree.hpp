#pragma once

#include <cstddef>
#include <vector>

#include "rangecast/geometry.hpp"

namespace rangecast {

/// Static 3D k-d tree over a point set; exact nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Point3>& points);

  bool empty() const { return points_.empty(); }

  /// Index of the nearest point and the squared distance to it.
  /// Ties resolve to the lowest index encountered during traversal.
  std::pair<size_t, double> nearest(const Point3& query) const;

 private:
  struct NodeRange {  // node over index_[lo, hi)
    size_t lo, hi;
    int axis;
  };

  size_t build(size_t lo, size_t hi);
  void search(size_t node, const Point3& q, size_t& best, double& best_d2) const;

  struct Node {
    size_t point;   // index into points_
    size_t left = kNone, right = kNone;
    int axis = 0;
  };
  static constexpr size_t kNone = static_cast<size_t>(-1);

  std::vector<Point3> points_;
  std::vector<size_t> order_;  // scratch during build
  std::vector<Node> nodes_;
  size_t root_ = kNone;
};

}  // namespace rangecast
