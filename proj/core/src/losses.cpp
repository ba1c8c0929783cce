#include "rangecast/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rangecast/kdtree.hpp"

namespace rangecast {

using ag::NodePtr;

namespace {

std::vector<double> flatten_frames(const std::vector<RangeImage>& frames) {
  std::vector<double> out;
  for (const auto& f : frames) out.insert(out.end(), f.ranges.begin(), f.ranges.end());
  return out;
}

void check_frames_shape(const NodePtr& pred, const std::vector<RangeImage>& gt,
                        const char* what) {
  if (gt.empty()) throw ContractViolation(std::string(what) + ": no target frames");
  const ag::Shape want{static_cast<int>(gt.size()), gt[0].height(), gt[0].width()};
  if (pred->shape != want)
    throw ContractViolation(std::string(what) + ": prediction " + ag::shape_str(pred->shape) +
                            " does not match targets " + ag::shape_str(want));
}

std::vector<size_t> subsample_indices(size_t n, int cap, Rng* rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  if (cap <= 0 || n <= static_cast<size_t>(cap) || !rng) return idx;
  for (size_t i = 0; i < static_cast<size_t>(cap); ++i)
    std::swap(idx[i], idx[i + rng->uniform_index(n - i)]);
  idx.resize(static_cast<size_t>(cap));
  return idx;
}

}  // namespace

NodePtr loss_range(const NodePtr& range_pred, const std::vector<RangeImage>& gt,
                   bool* no_valid) {
  check_frames_shape(range_pred, gt, "loss_range");
  std::vector<double> target = flatten_frames(gt);
  std::vector<double> weight(target.size(), 0.0);
  double n_valid = 0.0;
  for (size_t i = 0; i < target.size(); ++i)
    if (target[i] > 0.0) {
      weight[i] = 1.0;
      n_valid += 1.0;
    }
  if (no_valid) *no_valid = n_valid == 0.0;
  if (n_valid == 0.0) return ag::make_scalar(0.0);
  NodePtr gt_node = ag::make_const(range_pred->shape, std::move(target));
  return ag::weighted_l1(range_pred, gt_node, weight, n_valid);
}

NodePtr loss_mask(const NodePtr& mask_prob, const std::vector<RangeImage>& gt, double eps) {
  check_frames_shape(mask_prob, gt, "loss_mask");
  std::vector<double> target = flatten_frames(gt);
  for (auto& v : target) v = v > 0.0 ? 1.0 : 0.0;
  return ag::bce_mean(mask_prob, target, eps);
}

NodePtr loss_semantic(const NodePtr& pred_sem, const NodePtr& gt_sem,
                      const std::vector<double>& valid) {
  if (pred_sem->shape != gt_sem->shape || pred_sem->shape.size() != 3)
    throw ContractViolation("loss_semantic: maps must share a (C,H,W) shape");
  const size_t c = pred_sem->shape[0];
  const size_t pixels = static_cast<size_t>(pred_sem->shape[1]) * pred_sem->shape[2];
  if (valid.size() != pixels)
    throw ContractViolation("loss_semantic: validity mask size mismatch");
  double n_valid = 0.0;
  for (double v : valid)
    if (v > 0.0) n_valid += 1.0;
  if (n_valid == 0.0) return ag::make_scalar(0.0);
  std::vector<double> weight(c * pixels);
  for (size_t ch = 0; ch < c; ++ch)
    for (size_t p = 0; p < pixels; ++p) weight[ch * pixels + p] = valid[p] > 0.0 ? 1.0 : 0.0;
  return ag::weighted_l1(pred_sem, gt_sem, weight, static_cast<double>(c) * n_valid);
}

NodePtr chamfer_frame_loss(const NodePtr& range_pred, int frame,
                           const std::vector<double>& mask_prob, const PointCloud& gt,
                           const SensorModel& sensor, const ChamferGraphOptions& opt,
                           Rng* subsample_rng) {
  if (range_pred->shape.size() != 3 || frame < 0 || frame >= range_pred->shape[0])
    throw ContractViolation("chamfer_frame_loss: bad frame index");
  const int h = range_pred->shape[1], w = range_pred->shape[2];
  if (static_cast<size_t>(h) * w != mask_prob.size())
    throw ContractViolation("chamfer_frame_loss: mask size mismatch");

  std::vector<int64_t> candidates;
  const int64_t base = static_cast<int64_t>(frame) * h * w;
  for (size_t p = 0; p < mask_prob.size(); ++p)
    if (mask_prob[p] > opt.threshold && range_pred->value[base + p] > 0.0)
      candidates.push_back(static_cast<int64_t>(p));
  if (candidates.empty() || gt.points.empty()) return nullptr;

  std::vector<int64_t> flat;
  std::vector<Point3> dirs;
  for (size_t i : subsample_indices(candidates.size(), opt.max_points, subsample_rng)) {
    const int64_t p = candidates[i];
    flat.push_back(base + p);
    dirs.push_back(pixel_ray_direction(static_cast<int>(p % w), static_cast<int>(p / w),
                                       sensor));
  }
  std::vector<Point3> gt_points;
  for (size_t i : subsample_indices(gt.points.size(), opt.max_points, subsample_rng))
    gt_points.push_back(gt.points[i]);

  NodePtr ranges = ag::gather_flat(range_pred, std::move(flat));
  NodePtr points = ag::rays_to_points(ranges, dirs);
  return ag::chamfer_to_fixed(points, gt_points);
}

NodePtr total_loss(const NodePtr& l_r, const NodePtr& l_m, const NodePtr& l_s,
                   const NodePtr& l_c, const LossWeights& w) {
  NodePtr t = ag::add(l_r, l_m);
  t = ag::add(t, ag::mul_scalar(l_s, w.alpha_s));
  t = ag::add(t, ag::mul_scalar(l_c, w.alpha_c));
  return t;
}

double total_loss(double l_r, double l_m, double l_s, double l_c, const LossWeights& w) {
  double t = l_r + l_m;
  t = t + w.alpha_s * l_s;
  t = t + w.alpha_c * l_c;
  return t;
}

// ---------------------------------------------------------------------------
// Plain metrics
// ---------------------------------------------------------------------------

namespace {

double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty())
    throw DataError("chamfer_distance: empty cloud");
  KdTree tree_a(a.points), tree_b(b.points);
  double sum_ab = 0.0;
  for (const auto& p : a.points) sum_ab += tree_b.nearest(p).second;
  double sum_ba = 0.0;
  for (const auto& p : b.points) sum_ba += tree_a.nearest(p).second;
  return sum_ab / static_cast<double>(a.points.size()) +
         sum_ba / static_cast<double>(b.points.size());
}

double chamfer_distance_bruteforce(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty())
    throw DataError("chamfer_distance: empty cloud");
  auto one_way = [](const std::vector<Point3>& from, const std::vector<Point3>& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = sq_dist(p, to[0]);
      for (size_t i = 1; i < to.size(); ++i) best = std::min(best, sq_dist(p, to[i]));
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return one_way(a.points, b.points) + one_way(b.points, a.points);
}

SemanticSimilarity semantic_similarity(const std::vector<double>& pred_sem, int c_s,
                                       const std::vector<int32_t>& labels,
                                       const std::vector<uint8_t>* valid, double eps) {
  if (c_s < 2) throw ContractViolation("semantic_similarity: need at least 2 classes");
  if (pred_sem.size() % static_cast<size_t>(c_s) != 0)
    throw ContractViolation("semantic_similarity: map size not divisible by class count");
  const size_t pixels = pred_sem.size() / static_cast<size_t>(c_s);
  if (labels.size() != pixels)
    throw ContractViolation("semantic_similarity: label count mismatch");
  if (valid && valid->size() != pixels)
    throw ContractViolation("semantic_similarity: validity mask size mismatch");

  double cross_entropy = 0.0;
  double cells = 0.0;
  for (size_t p = 0; p < pixels; ++p) {
    if (valid && !(*valid)[p]) continue;
    const int32_t y = labels[p];
    if (y < 0 || y >= c_s)
      throw ContractViolation("semantic_similarity: label out of range");
    const double prob = std::min(1.0, std::max(eps, pred_sem[static_cast<size_t>(y) * pixels + p]));
    cross_entropy += -std::log(prob);
    cells += static_cast<double>(c_s);
  }
  SemanticSimilarity out;
  if (cells == 0.0) return out;
  if (cross_entropy <= cells / kSemanticSimilarityCap) {
    out.value = kSemanticSimilarityCap;
    out.capped = true;
    return out;
  }
  out.value = cells / cross_entropy;
  return out;
}

FramePrediction baseline_copy_last(const std::vector<RangeImage>& past, int future_frames) {
  if (past.empty()) throw ContractViolation("baseline_copy_last: no past frames");
  if (future_frames < 1) throw ContractViolation("baseline_copy_last: F must be >= 1");
  FramePrediction out;
  const RangeImage& last = past.back();
  std::vector<double> mask(last.ranges.size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = last.ranges[i] > 0.0 ? 1.0 : 0.0;
  for (int f = 0; f < future_frames; ++f) {
    out.ranges.push_back(last);
    out.mask_probs.push_back(mask);
  }
  return out;
}

}  // namespace rangecast
