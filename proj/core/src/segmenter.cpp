#include "rangecast/segmenter.hpp"

#include <cmath>
#include <sstream>

namespace rangecast {

using ag::NodePtr;

void SegmenterConfig::validate() const {
  if (num_classes < 2) throw ConfigError("segmenter: need at least 2 classes");
  for (int w : widths)
    if (w < 1) throw ConfigError("segmenter: conv widths must be >= 1");
  if (max_range <= 0.0) throw ConfigError("segmenter: max_range must be > 0");
}

std::vector<int32_t> segmenter_labels(const std::vector<int32_t>& classes,
                                      const SegmenterConfig& cfg) {
  std::vector<int32_t> out(classes.size());
  for (size_t i = 0; i < classes.size(); ++i) {
    const int32_t c = classes[i];
    if (c == kNoReturnClass) {
      out[i] = no_return_channel(cfg);
    } else if (c >= 0 && c < cfg.num_classes - 1) {
      out[i] = c;
    } else {
      throw DataError("segmenter_labels: class id " + std::to_string(c) +
                      " outside the configured label space");
    }
  }
  return out;
}

uint32_t segmenter_config_hash(const SegmenterConfig& cfg) {
  std::ostringstream os;
  os << cfg.num_classes << '|';
  for (int w : cfg.widths) os << w << ',';
  os << '|' << cfg.max_range;
  uint32_t h = 2166136261u;
  for (char c : os.str()) {
    h ^= static_cast<uint8_t>(c);
    h *= 16777619u;
  }
  return h;
}

Segmenter::Segmenter(const SegmenterConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  int cin = 1;
  int i = 0;
  for (int w : cfg_.widths) {
    convs_.push_back(nn::Conv3d(store_, rng, "seg" + std::to_string(i++), cin, w,
                                {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, /*circular=*/true));
    cin = w;
  }
  convs_.push_back(nn::Conv3d(store_, rng, "seg" + std::to_string(i), cin,
                              cfg_.num_classes, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, true));
}

NodePtr Segmenter::forward(const NodePtr& x) const {
  if (x->shape.size() != 4 || x->shape[0] != 1 || x->shape[1] != 1)
    throw ContractViolation("segmenter: input must be (1,1,H,W), got " +
                            ag::shape_str(x->shape));
  const int h = x->shape[2], w = x->shape[3];
  NodePtr y = x;
  for (size_t i = 0; i + 1 < convs_.size(); ++i)
    y = ag::leaky_relu(convs_[i].forward(y), cfg_.leaky_slope);
  y = convs_.back().forward(y);
  y = ag::softmax_axis(ag::reshape(y, {cfg_.num_classes, h * w}), 0);
  return ag::reshape(y, {cfg_.num_classes, h, w});
}

NodePtr Segmenter::make_input(const RangeImage& image) const {
  std::vector<double> values(image.ranges.size());
  for (size_t i = 0; i < values.size(); ++i) values[i] = image.ranges[i] / cfg_.max_range;
  return ag::make_const({1, 1, image.height(), image.width()}, std::move(values));
}

std::vector<double> Segmenter::segment(const RangeImage& image) const {
  return forward(make_input(image))->value;
}

void Segmenter::freeze() {
  store_.set_requires_grad(false);
  frozen_ = true;
}

namespace {

/// Mean -log p(label) over valid pixels of one labeled frame.
NodePtr frame_cross_entropy(const Segmenter& seg, const LabeledRangeImage& frame,
                            double eps = 1e-7) {
  const size_t pixels = frame.image.ranges.size();
  NodePtr probs = seg.forward(seg.make_input(frame.image));
  NodePtr logp = ag::log_op(ag::clamp(probs, eps, 1.0));
  std::vector<int64_t> picks;
  for (size_t p = 0; p < pixels; ++p) {
    if (frame.image.ranges[p] <= 0.0) continue;
    picks.push_back(static_cast<int64_t>(frame.classes[p]) * pixels + p);
  }
  if (picks.empty()) return nullptr;
  const double n = static_cast<double>(picks.size());
  return ag::mul_scalar(ag::sum_all(ag::gather_flat(logp, std::move(picks))), -1.0 / n);
}

}  // namespace

double segmenter_accuracy(const Segmenter& seg,
                          const std::vector<LabeledRangeImage>& frames) {
  int64_t correct = 0, total = 0;
  const int c_s = seg.config().num_classes;
  for (const auto& frame : frames) {
    const std::vector<double> probs = seg.segment(frame.image);
    const size_t pixels = frame.image.ranges.size();
    for (size_t p = 0; p < pixels; ++p) {
      if (frame.image.ranges[p] <= 0.0) continue;
      int best = 0;
      for (int c = 1; c < c_s; ++c)
        if (probs[static_cast<size_t>(c) * pixels + p] >
            probs[static_cast<size_t>(best) * pixels + p])
          best = c;
      correct += best == frame.classes[p];
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

PretrainResult pretrain_segmenter(Segmenter& seg,
                                  const std::vector<LabeledRangeImage>& train,
                                  const std::vector<LabeledRangeImage>& heldout,
                                  int epochs, double lr) {
  if (train.empty()) throw DataError("pretrain_segmenter: no training frames");
  if (seg.frozen()) throw ContractViolation("pretrain_segmenter: segmenter already frozen");

  PretrainResult result;
  nn::Adam opt(seg.store());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double epoch_loss = 0.0;
    int counted = 0;
    for (const auto& frame : train) {
      NodePtr loss = frame_cross_entropy(seg, frame);
      if (!loss) continue;
      seg.store().zero_grad();
      ag::backward(loss);
      opt.step(lr);
      epoch_loss += loss->value[0];
      ++counted;
    }
    result.loss_per_epoch.push_back(counted ? epoch_loss / counted : 0.0);
  }

  result.heldout_accuracy = segmenter_accuracy(seg, heldout);
  if (result.heldout_accuracy < 0.80) {
    std::ostringstream os;
    os << "pretrain_segmenter: held-out accuracy " << result.heldout_accuracy
       << " below the 0.80 floor after " << epochs << " epochs; last epoch loss "
       << (result.loss_per_epoch.empty() ? 0.0 : result.loss_per_epoch.back());
    throw NumericError(os.str());
  }
  seg.freeze();
  return result;
}

NodePtr aux_semantic_loss(const ModelOutput& out, const std::vector<RangeImage>& gt,
                          const Segmenter& seg, Rng& rng, int* chosen_frame) {
  if (!seg.frozen())
    throw ContractViolation("aux_semantic_loss: segmenter must be frozen first");
  const int f = out.range_pred->shape[0];
  if (static_cast<int>(gt.size()) != f)
    throw ContractViolation("aux_semantic_loss: target frame count mismatch");
  const int k = static_cast<int>(rng.uniform_index(static_cast<size_t>(f)));
  if (chosen_frame) *chosen_frame = k;
  const int h = out.range_pred->shape[1], w = out.range_pred->shape[2];

  NodePtr pred_k = ag::reshape(ag::slice(out.range_pred, 0, k, 1), {1, 1, h, w});
  pred_k = ag::mul_scalar(pred_k, 1.0 / seg.config().max_range);
  NodePtr pred_sem = seg.forward(pred_k);
  NodePtr gt_sem = seg.forward(seg.make_input(gt[k]));

  std::vector<double> valid(gt[k].ranges.size());
  for (size_t i = 0; i < valid.size(); ++i) valid[i] = gt[k].ranges[i] > 0.0 ? 1.0 : 0.0;
  return loss_semantic(pred_sem, gt_sem, valid);
}

}  // namespace rangecast
