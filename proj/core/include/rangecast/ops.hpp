#pragma once

#include <array>

#include "rangecast/geometry.hpp"
#include "rangecast/tensor.hpp"

namespace rangecast::ag {

// ---------------------------------------------------------------------------
// Shape moves
// ---------------------------------------------------------------------------

NodePtr reshape(const NodePtr& x, const Shape& shape);
NodePtr permute(const NodePtr& x, const std::vector<int>& perm);
NodePtr concat(const std::vector<NodePtr>& xs, int axis);
NodePtr slice(const NodePtr& x, int axis, int start, int len);
/// out[i] = x.flat[indices[i]]; backward scatter-adds.
NodePtr gather_flat(const NodePtr& x, std::vector<int64_t> indices);

// ---------------------------------------------------------------------------
// Elementwise (numpy-style trailing broadcast on binary ops)
// ---------------------------------------------------------------------------

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr add_scalar(const NodePtr& x, double s);
NodePtr mul_scalar(const NodePtr& x, double s);
NodePtr sigmoid(const NodePtr& x);
NodePtr leaky_relu(const NodePtr& x, double slope);
NodePtr clamp(const NodePtr& x, double lo, double hi);
NodePtr log_op(const NodePtr& x);

// ---------------------------------------------------------------------------
// Reductions / contractions
// ---------------------------------------------------------------------------

NodePtr sum_all(const NodePtr& x);
NodePtr mean_all(const NodePtr& x);
/// (C,T,H,W) -> (C): mean over the spatial/temporal extent per channel.
NodePtr global_avg_pool(const NodePtr& x);

NodePtr matmul(const NodePtr& a, const NodePtr& b);           // (m,k)x(k,n)
NodePtr bmm(const NodePtr& a, const NodePtr& b);              // (B,m,k)x(B,k,n)
NodePtr softmax_last(const NodePtr& x);                       // over the last axis
NodePtr softmax_axis(const NodePtr& x, int axis);

// ---------------------------------------------------------------------------
// Convolution kernels. x is (C,T,H,W); weights (Cout,Cin,kt,kh,kw) for
// conv3d and (Cin,Cout,kt,kh,kw) for the transpose. Width padding is
// circular when circular_width is set; time/height pad with zeros.
// ---------------------------------------------------------------------------

struct Conv3dSpec {
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
  bool circular_width = false;
};

NodePtr conv3d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
               const Conv3dSpec& spec);
NodePtr conv3d_transpose(const NodePtr& x, const NodePtr& w, const NodePtr& b,
                         const Conv3dSpec& spec, const std::array<int, 3>& out_dims);

/// Single-channel circular 1D convolution over a length-C vector (ECA).
NodePtr conv1d_circular(const NodePtr& x, const NodePtr& w, const NodePtr& b);

/// Single-sample batch norm over (T,H,W) per channel with learned affine.
/// In training mode the current statistics normalize and update the running
/// buffers; in eval mode the running buffers normalize.
NodePtr batch_norm3d(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                     std::vector<double>& running_mean, std::vector<double>& running_var,
                     bool training, double momentum = 0.1, double eps = 1e-5);

/// Layer norm over the last axis with learned affine.
NodePtr layer_norm_last(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                        double eps = 1e-5);

// ---------------------------------------------------------------------------
// Loss kernels
// ---------------------------------------------------------------------------

/// sum_i weight[i] * |a[i] - b[i]| / denom.
NodePtr weighted_l1(const NodePtr& a, const NodePtr& b,
                    const std::vector<double>& weight, double denom);

/// Mean over all elements of -[t log p + (1-t) log(1-p)] with p clamped to
/// [eps, 1-eps]; natural log.
NodePtr bce_mean(const NodePtr& pred, const std::vector<double>& target, double eps);

/// points[i] = ranges[i] * dirs[i]; output (N,3).
NodePtr rays_to_points(const NodePtr& ranges, const std::vector<Point3>& dirs);

/// Symmetric chamfer distance between graph points (N,3) and a fixed cloud.
/// Gradients flow to the predicted points through the realized matching.
NodePtr chamfer_to_fixed(const NodePtr& pred_points, const std::vector<Point3>& gt);

}  // namespace rangecast::ag
