#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "rangecast/dataio.hpp"
#include "rangecast/ops.hpp"
#include "rangecast/rng.hpp"

namespace rangecast::nn {

using ag::NodePtr;
using ag::Shape;

/// Owns all named parameters and stat buffers of a model; the unit of
/// checkpointing.
class ParamStore {
 public:
  NodePtr create_param(const std::string& name, const Shape& shape);
  std::shared_ptr<std::vector<double>> create_buffer(const std::string& name,
                                                     size_t size, double fill);

  const std::vector<std::pair<std::string, NodePtr>>& params() const { return params_; }

  int64_t param_count() const;
  void zero_grad();
  void set_requires_grad(bool on);

  /// Parameters and buffers as RCTF tensors (f32).
  std::vector<NamedTensor> to_tensors() const;
  /// Loads by name; missing or shape-mismatched entries raise DataError.
  void load_tensors(const std::vector<NamedTensor>& tensors);

 private:
  std::vector<std::pair<std::string, NodePtr>> params_;
  std::vector<std::pair<std::string, std::shared_ptr<std::vector<double>>>> buffers_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Conv3d {
  NodePtr w, b;
  ag::Conv3dSpec spec;
  std::array<int, 3> kernel{3, 3, 3};
  int cin = 0, cout = 0;

  Conv3d() = default;
  Conv3d(ParamStore& store, Rng& rng, const std::string& name, int cin, int cout,
         std::array<int, 3> kernel, std::array<int, 3> stride, std::array<int, 3> pad,
         bool circular_width);
  NodePtr forward(const NodePtr& x) const { return ag::conv3d(x, w, b, spec); }
};

struct ConvTranspose3d {
  NodePtr w, b;
  ag::Conv3dSpec spec;
  std::array<int, 3> kernel{3, 3, 3};
  int cin = 0, cout = 0;

  ConvTranspose3d() = default;
  ConvTranspose3d(ParamStore& store, Rng& rng, const std::string& name, int cin,
                  int cout, std::array<int, 3> kernel, std::array<int, 3> stride,
                  std::array<int, 3> pad, bool circular_width);
  NodePtr forward(const NodePtr& x, const std::array<int, 3>& out_dims) const {
    return ag::conv3d_transpose(x, w, b, spec, out_dims);
  }
};

struct Linear {
  NodePtr w, b;  // (in,out), (out)
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore& store, Rng& rng, const std::string& name, int in, int out);
  NodePtr forward(const NodePtr& x) const {  // x: (rows, in)
    return ag::add(ag::matmul(x, w), b);
  }
};

struct BatchNorm3d {
  NodePtr gamma, beta;
  std::shared_ptr<std::vector<double>> running_mean, running_var;

  BatchNorm3d() = default;
  BatchNorm3d(ParamStore& store, const std::string& name, int channels);
  NodePtr forward(const NodePtr& x, bool training) const {
    return ag::batch_norm3d(x, gamma, beta, *running_mean, *running_var, training);
  }
};

struct LayerNorm {
  NodePtr gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int channels);
  NodePtr forward(const NodePtr& x) const {
    return ag::layer_norm_last(x, gamma, beta);
  }
};

/// Kernel size of the channel-attention 1D conv: nearest odd to
/// log2(C)/2 + 1/2, clamped to [1, C].
int eca_kernel_size(int channels);

/// Efficient channel attention: global pool -> circular 1D conv over the
/// channel descriptor -> sigmoid gate -> channel scaling.
struct Eca {
  NodePtr w, b;
  int channels = 0, k = 0;

  Eca() = default;
  Eca(ParamStore& store, Rng& rng, const std::string& name, int channels);
  NodePtr forward(const NodePtr& x) const;
};

/// Pre-norm multi-head self-attention + feed-forward, residual around both.
struct TransformerLayer {
  LayerNorm ln_attn, ln_ff;
  Linear wq, wk, wv, wo, ff1, ff2;
  int channels = 0, heads = 0, ff_width = 0;
  double leaky_slope = 0.01;

  TransformerLayer() = default;
  TransformerLayer(ParamStore& store, Rng& rng, const std::string& name, int channels,
                   int heads, int ff_width);
  NodePtr forward(const NodePtr& x) const;  // x: (L, C)
};

/// Multi-head scaled dot-product self-attention on (L, C) tokens.
NodePtr multi_head_self_attention(const NodePtr& x, const Linear& wq, const Linear& wk,
                                  const Linear& wv, const Linear& wo, int heads);

double uniform_init_bound(int fan_in);

}  // namespace rangecast::nn
