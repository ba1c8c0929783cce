#pragma once

#include <vector>

#include "rangecast/geometry.hpp"
#include "rangecast/ops.hpp"
#include "rangecast/rng.hpp"

namespace rangecast {

struct LossWeights {
  double alpha_s = 0.0;
  double alpha_c = 0.0;
};

struct LossReport {
  double l_r = 0.0, l_m = 0.0, l_s = 0.0, l_c = 0.0, total = 0.0;
  std::vector<double> per_step_chamfer;
  bool range_no_valid = false;  // warning: no valid pixels in the range target
  bool chamfer_skipped = false; // warning: an empty cloud forced a substitute
};

// ---------------------------------------------------------------------------
// Graph losses (differentiable). Prediction nodes are (F,H,W).
// ---------------------------------------------------------------------------

/// Mean absolute range error over valid pixels (gt > 0), normalized by the
/// valid-pixel count. Zero valid pixels yield a constant 0 and set the flag.
ag::NodePtr loss_range(const ag::NodePtr& range_pred, const std::vector<RangeImage>& gt,
                       bool* no_valid = nullptr);

/// Binary cross-entropy of the mask head against m = (gt > 0), mean over all
/// pixels, natural log, probabilities clamped to [eps, 1-eps].
ag::NodePtr loss_mask(const ag::NodePtr& mask_prob, const std::vector<RangeImage>& gt,
                      double eps = 1e-7);

/// Mean absolute difference between two (C_s,H,W) probability maps over the
/// channels of valid pixels; normalized by C_s * valid count.
ag::NodePtr loss_semantic(const ag::NodePtr& pred_sem, const ag::NodePtr& gt_sem,
                          const std::vector<double>& valid);

struct ChamferGraphOptions {
  double threshold = 0.5;  // mask gate before re-projection
  int max_points = 0;      // per-side subsample cap; 0 disables
};

/// Symmetric squared chamfer between the re-projected prediction of one frame
/// and a fixed ground-truth cloud. Returns null when either side is empty.
ag::NodePtr chamfer_frame_loss(const ag::NodePtr& range_pred, int frame,
                               const std::vector<double>& mask_prob, const PointCloud& gt,
                               const SensorModel& sensor, const ChamferGraphOptions& opt,
                               Rng* subsample_rng);

/// total = ((l_r + l_m) + alpha_s*l_s) + alpha_c*l_c, in this exact order.
ag::NodePtr total_loss(const ag::NodePtr& l_r, const ag::NodePtr& l_m,
                       const ag::NodePtr& l_s, const ag::NodePtr& l_c,
                       const LossWeights& w);
double total_loss(double l_r, double l_m, double l_s, double l_c, const LossWeights& w);

// ---------------------------------------------------------------------------
// Plain metrics (no gradients).
// ---------------------------------------------------------------------------

/// Symmetric squared chamfer distance, nearest neighbors via k-d tree.
double chamfer_distance(const PointCloud& a, const PointCloud& b);
/// O(NM) reference used to validate the accelerated path.
double chamfer_distance_bruteforce(const PointCloud& a, const PointCloud& b);

struct SemanticSimilarity {
  double value = 0.0;
  bool capped = false;  // degenerate (near-zero) cross-entropy was clamped
};

constexpr double kSemanticSimilarityCap = 1e9;

/// numerator / total cross-entropy where numerator counts the summed cells:
/// C_s*H*W over all pixels, or C_s*n_valid when a validity mask is given.
/// pred_sem is (C_s,H,W) row-major, labels are per-pixel class ids.
SemanticSimilarity semantic_similarity(const std::vector<double>& pred_sem, int c_s,
                                       const std::vector<int32_t>& labels,
                                       const std::vector<uint8_t>* valid = nullptr,
                                       double eps = 1e-7);

// ---------------------------------------------------------------------------
// Copy-last baseline.
// ---------------------------------------------------------------------------

/// A prediction in plain form, shared by the model path and baselines.
struct FramePrediction {
  std::vector<RangeImage> ranges;
  std::vector<std::vector<double>> mask_probs;  // per frame, row-major H*W
};

/// Repeats the last past frame F times; masks follow validity.
FramePrediction baseline_copy_last(const std::vector<RangeImage>& past, int future_frames);

}  // namespace rangecast
