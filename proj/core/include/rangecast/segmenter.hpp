#pragma once

#include <cstdint>
#include <vector>

#include "rangecast/losses.hpp"
#include "rangecast/model.hpp"
#include "rangecast/synth.hpp"

namespace rangecast {

struct SegmenterConfig {
  int num_classes = kNumSynthClasses + 1;  // synthetic classes + no-return
  std::vector<int> widths = {16, 16, 16};  // hidden conv widths
  double leaky_slope = 0.01;
  double max_range = 30.0;  // input normalization scale
  uint64_t seed = 0;

  void validate() const;
};

/// Label channel used for pixels without a return.
inline int no_return_channel(const SegmenterConfig& cfg) { return cfg.num_classes - 1; }

/// Per-pixel class ids in segmenter label space: synthetic ids pass through,
/// kNoReturnClass maps to the dedicated last channel.
std::vector<int32_t> segmenter_labels(const std::vector<int32_t>& classes,
                                      const SegmenterConfig& cfg);

/// Small per-pixel classifier over single range images: a 2D conv stack with
/// circular width padding and a softmax over classes. Stands in for a large
/// pre-trained segmentation network at desk scale.
class Segmenter {
 public:
  explicit Segmenter(const SegmenterConfig& cfg);

  const SegmenterConfig& config() const { return cfg_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

  /// (1,1,H,W) normalized ranges -> (C_s,H,W) per-pixel probabilities.
  ag::NodePtr forward(const ag::NodePtr& x) const;

  /// Normalized constant input node from a range image.
  ag::NodePtr make_input(const RangeImage& image) const;

  /// Probability map values for one image, no graph kept.
  std::vector<double> segment(const RangeImage& image) const;

  void freeze();
  bool frozen() const { return frozen_; }

 private:
  SegmenterConfig cfg_;
  nn::ParamStore store_;
  std::vector<nn::Conv3d> convs_;
  bool frozen_ = false;
};

/// Checkpoint-compatibility hash over the architecture-defining fields.
uint32_t segmenter_config_hash(const SegmenterConfig& cfg);

struct PretrainResult {
  std::vector<double> loss_per_epoch;
  double heldout_accuracy = 0.0;
};

/// Cross-entropy training on the valid pixels of labeled frames, then a
/// held-out pixel-accuracy check. Freezes the segmenter on success; accuracy
/// below 0.80 aborts with diagnostics.
PretrainResult pretrain_segmenter(Segmenter& seg,
                                  const std::vector<LabeledRangeImage>& train,
                                  const std::vector<LabeledRangeImage>& heldout,
                                  int epochs, double lr);

/// Held-out pixel accuracy on valid pixels.
double segmenter_accuracy(const Segmenter& seg,
                          const std::vector<LabeledRangeImage>& frames);

/// Semantic auxiliary loss: picks frame k uniformly from rng, segments the
/// predicted and ground-truth range images through the frozen segmenter, and
/// compares the probability maps on the ground truth's valid pixels.
/// Gradients reach the prediction through the segmenter.
ag::NodePtr aux_semantic_loss(const ModelOutput& out, const std::vector<RangeImage>& gt,
                              const Segmenter& seg, Rng& rng, int* chosen_frame = nullptr);

}  // namespace rangecast
