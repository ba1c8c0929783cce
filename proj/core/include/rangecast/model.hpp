#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rangecast/adam.hpp"
#include "rangecast/nn.hpp"

namespace rangecast {

enum class BranchMode { both, h_only, w_only };

BranchMode branch_mode_from_string(const std::string& s);
const char* branch_mode_name(BranchMode m);

struct ModelConfig {
  int past_frames = 5;
  int future_frames = 5;
  int input_height = 16;
  int input_width = 64;
  std::vector<int> channels = {8, 16, 32};  // one entry per encoder stage
  int attn_layers = 2;
  int attn_heads = 4;
  int attn_ff_width = 0;  // 0 -> 2 * bottleneck channels
  BranchMode branch = BranchMode::both;
  double max_range = 30.0;
  double leaky_slope = 0.01;
  uint64_t seed = 0;

  int stages() const { return static_cast<int>(channels.size()); }
  int bottleneck_channels() const { return channels.back(); }
  int bottleneck_height() const { return input_height >> stages(); }
  int bottleneck_width() const { return input_width >> stages(); }
  int ff_width() const { return attn_ff_width > 0 ? attn_ff_width : 2 * bottleneck_channels(); }
  void validate() const;
};

struct ModelOutput {
  ag::NodePtr range_pred;  // (F,H,W) meters in [0, max_range]
  ag::NodePtr mask_prob;   // (F,H,W) in [0,1]
};

struct ModelComplexity {
  int64_t params = 0;
  int64_t macs = 0;  // forward multiply-accumulates
};

/// Sequence-to-sequence range-image predictor: 3D conv encoder with channel
/// attention, dual-axis Transformer branches over image sentences, fused
/// decoder with skip connections, dual range/mask heads.
class PredictorModel {
 public:
  explicit PredictorModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

  /// (1,P,H,W) normalized input node from P past frames.
  ag::NodePtr make_input(const std::vector<RangeImage>& past) const;

  struct EncodeResult {
    ag::NodePtr bottleneck;
    std::vector<ag::NodePtr> skips;  // per-stage outputs, shallow to deep
  };
  EncodeResult encode(const ag::NodePtr& x, bool training) const;

  /// Full forward from a (1,P,H,W) input node.
  ModelOutput forward(const ag::NodePtr& x, bool training) const;

  ModelOutput predict(const std::vector<RangeImage>& past, bool training) const;

  ModelComplexity complexity() const;
  /// Per-layer breakdown lines for the info report.
  std::vector<std::string> complexity_report() const;

 private:
  struct EncoderStage {
    nn::Conv3d conv;
    nn::BatchNorm3d bn;
    nn::Eca eca;
  };
  struct DecoderStage {
    nn::ConvTranspose3d conv;
    nn::BatchNorm3d bn;
    nn::Eca eca;
  };
  struct Branch {
    // Strided convs compressing one axis to 1, mirrored by transposed convs.
    std::vector<nn::Conv3d> down;
    std::vector<nn::ConvTranspose3d> up;
    ag::NodePtr pos_embedding;  // (L, C)
    std::vector<nn::TransformerLayer> layers;
    bool compress_height = false;  // true for the W branch
  };

  ag::NodePtr run_branch(const Branch& branch, const ag::NodePtr& x) const;
  Branch make_branch(Rng& rng, const std::string& name, bool compress_height);

  ModelConfig cfg_;
  nn::ParamStore store_;
  std::vector<EncoderStage> encoder_;
  Branch branch_h_, branch_w_;
  nn::Eca fuse_eca_;
  nn::Conv3d fuse_conv_;
  std::vector<DecoderStage> decoder_;
  nn::Conv3d head_;
  nn::Linear temporal_;  // P -> F mapping, only when P != F
  bool has_temporal_ = false;
};

}  // namespace rangecast
