#include "rangecast/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rangecast {

namespace {

inline double coord(const Point3& p, int axis) {
  return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}

inline double dist2(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

KdTree::KdTree(const std::vector<Point3>& points) : points_(points) {
  if (points_.empty()) return;
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), size_t{0});
  nodes_.reserve(points_.size());
  root_ = build(0, points_.size());
  order_.clear();
  order_.shrink_to_fit();
}

size_t KdTree::build(size_t lo, size_t hi) {
  if (lo >= hi) return kNone;
  // Split on the widest axis of this subset.
  Point3 mn{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max()};
  Point3 mx{-mn.x, -mn.y, -mn.z};
  for (size_t i = lo; i < hi; ++i) {
    const Point3& p = points_[order_[i]];
    mn.x = std::min(mn.x, p.x); mx.x = std::max(mx.x, p.x);
    mn.y = std::min(mn.y, p.y); mx.y = std::max(mx.y, p.y);
    mn.z = std::min(mn.z, p.z); mx.z = std::max(mx.z, p.z);
  }
  int axis = 0;
  double span = mx.x - mn.x;
  if (mx.y - mn.y > span) { axis = 1; span = mx.y - mn.y; }
  if (mx.z - mn.z > span) { axis = 2; }

  const size_t mid = lo + (hi - lo) / 2;
  std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                   [&](size_t a, size_t b) {
                     return coord(points_[a], axis) < coord(points_[b], axis);
                   });

  const size_t node_idx = nodes_.size();
  nodes_.push_back(Node{order_[mid], kNone, kNone, axis});
  const size_t left = build(lo, mid);
  const size_t right = build(mid + 1, hi);
  nodes_[node_idx].left = left;
  nodes_[node_idx].right = right;
  return node_idx;
}

std::pair<size_t, double> KdTree::nearest(const Point3& query) const {
  if (empty()) throw ContractViolation("KdTree::nearest on empty tree");
  size_t best = kNone;
  double best_d2 = std::numeric_limits<double>::max();
  search(root_, query, best, best_d2);
  return {best, best_d2};
}

void KdTree::search(size_t node_idx, const Point3& q, size_t& best,
                    double& best_d2) const {
  if (node_idx == kNone) return;
  const Node& node = nodes_[node_idx];
  const Point3& p = points_[node.point];
  const double d2 = dist2(p, q);
  if (d2 < best_d2 || (d2 == best_d2 && node.point < best)) {
    best_d2 = d2;
    best = node.point;
  }
  const double delta = coord(q, node.axis) - coord(p, node.axis);
  const size_t near = delta < 0.0 ? node.left : node.right;
  const size_t far = delta < 0.0 ? node.right : node.left;
  search(near, q, best, best_d2);
  if (delta * delta <= best_d2) search(far, q, best, best_d2);
}

}  // namespace rangecast
