#include "rangecast/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rangecast {

using ag::NodePtr;

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (decay <= 0.0 || decay > 1.0) throw ConfigError("train: decay must be in (0,1]");
  if (pretrain_epochs < 0 || finetune_epochs < 0 || total_epochs() < 1)
    throw ConfigError("train: need at least one epoch");
  if (alpha_s < 0.0) throw ConfigError("train: alpha_s must be >= 0");
  if (mask_threshold <= 0.0 || mask_threshold >= 1.0)
    throw ConfigError("train: mask_threshold must be in (0,1)");
  if (chamfer_max_points < 0) throw ConfigError("train: chamfer_max_points must be >= 0");
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

uint32_t model_config_hash(const ModelConfig& cfg) {
  std::ostringstream os;
  os << cfg.past_frames << '|' << cfg.future_frames << '|' << cfg.input_height << '|'
     << cfg.input_width << '|';
  for (int c : cfg.channels) os << c << ',';
  os << '|' << cfg.attn_layers << '|' << cfg.attn_heads << '|' << cfg.ff_width() << '|'
     << branch_mode_name(cfg.branch) << '|' << cfg.max_range;
  uint32_t h = 2166136261u;
  for (char c : os.str()) {
    h ^= static_cast<uint8_t>(c);
    h *= 16777619u;
  }
  return h;
}

namespace {

constexpr float kCheckpointVersion = 1.0f;
const char* kMetaName = "meta";

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamStore& store,
                     uint32_t config_hash, int64_t step) {
  std::vector<NamedTensor> tensors = store.to_tensors();
  NamedTensor meta;
  meta.name = kMetaName;
  meta.dims = {4};
  meta.data = {kCheckpointVersion, static_cast<float>(config_hash >> 16),
               static_cast<float>(config_hash & 0xffffu), static_cast<float>(step)};
  tensors.push_back(std::move(meta));
  save_tensor_file(path, tensors);
}

int64_t load_checkpoint(const std::string& path, nn::ParamStore& store,
                        uint32_t expected_hash) {
  std::vector<NamedTensor> tensors = load_tensor_file(path);
  const NamedTensor* meta = nullptr;
  for (const auto& t : tensors)
    if (t.name == kMetaName) meta = &t;
  if (!meta || meta->data.size() != 4)
    throw DataError("checkpoint " + path + ": missing metadata entry");
  const uint32_t stored = (static_cast<uint32_t>(meta->data[1]) << 16) |
                          static_cast<uint32_t>(meta->data[2]);
  if (stored != expected_hash)
    throw DataError("checkpoint " + path + ": config hash mismatch (stored " +
                    std::to_string(stored) + ", expected " + std::to_string(expected_hash) +
                    ")");
  store.load_tensors(tensors);
  return static_cast<int64_t>(meta->data[3]);
}

// ---------------------------------------------------------------------------
// Plain metrics shared by the model and baseline evaluation paths
// ---------------------------------------------------------------------------

namespace {

double plain_loss_range(const FramePrediction& pred, const std::vector<RangeImage>& gt) {
  double sum = 0.0, n = 0.0;
  for (size_t f = 0; f < gt.size(); ++f)
    for (size_t i = 0; i < gt[f].ranges.size(); ++i)
      if (gt[f].ranges[i] > 0.0) {
        sum += std::abs(pred.ranges[f].ranges[i] - gt[f].ranges[i]);
        n += 1.0;
      }
  return n > 0.0 ? sum / n : 0.0;
}

double plain_loss_mask(const FramePrediction& pred, const std::vector<RangeImage>& gt,
                       double eps = 1e-7) {
  double sum = 0.0, n = 0.0;
  for (size_t f = 0; f < gt.size(); ++f)
    for (size_t i = 0; i < gt[f].ranges.size(); ++i) {
      const double m = gt[f].ranges[i] > 0.0 ? 1.0 : 0.0;
      const double p = std::min(1.0 - eps, std::max(eps, pred.mask_probs[f][i]));
      sum += -(m * std::log(p) + (1.0 - m) * std::log(1.0 - p));
      n += 1.0;
    }
  return n > 0.0 ? sum / n : 0.0;
}

struct EvalAccumulator {
  std::vector<double> chamfer_sums;
  int samples = 0;
  int empty_frames = 0;
  double l_r_sum = 0.0, l_m_sum = 0.0;
  double sim_sum = 0.0;
  int sim_count = 0;
  bool sim_capped = false;
};

void accumulate_sample(EvalAccumulator& acc, const FramePrediction& pred,
                       const SequenceSample& sample, double threshold,
                       const Segmenter* segmenter) {
  const SensorModel& sensor = sample.future[0].sensor;
  if (acc.chamfer_sums.empty()) acc.chamfer_sums.assign(sample.future.size(), 0.0);
  for (size_t f = 0; f < sample.future.size(); ++f) {
    PointCloud gt_cloud = range_image_to_cloud(sample.future[f], sensor);
    PointCloud pred_cloud =
        range_image_to_cloud(pred.ranges[f], pred.mask_probs[f], threshold, sensor);
    if (gt_cloud.points.empty() || pred_cloud.points.empty()) {
      acc.chamfer_sums[f] += kEmptyCloudChamfer;
      ++acc.empty_frames;
    } else {
      acc.chamfer_sums[f] += chamfer_distance(pred_cloud, gt_cloud);
    }
    if (segmenter && f < sample.future_classes.size() &&
        !sample.future_classes[f].empty()) {
      const std::vector<int32_t> labels =
          segmenter_labels(sample.future_classes[f], segmenter->config());
      const SemanticSimilarity sim = semantic_similarity(
          segmenter->segment(pred.ranges[f]), segmenter->config().num_classes, labels);
      acc.sim_sum += sim.value;
      acc.sim_capped = acc.sim_capped || sim.capped;
      ++acc.sim_count;
    }
  }
  acc.l_r_sum += plain_loss_range(pred, sample.future);
  acc.l_m_sum += plain_loss_mask(pred, sample.future);
  ++acc.samples;
}

EvalReport finish_report(const EvalAccumulator& acc) {
  EvalReport report;
  if (acc.samples == 0) return report;
  double total = 0.0;
  for (double s : acc.chamfer_sums) {
    report.per_step_chamfer.push_back(s / acc.samples);
    total += s / acc.samples;
  }
  report.mean_chamfer = acc.chamfer_sums.empty()
                            ? 0.0
                            : total / static_cast<double>(acc.chamfer_sums.size());
  report.l_r = acc.l_r_sum / acc.samples;
  report.l_m = acc.l_m_sum / acc.samples;
  if (acc.sim_count > 0) {
    report.similarity = acc.sim_sum / acc.sim_count;
    report.has_similarity = true;
    report.similarity_capped = acc.sim_capped;
  }
  report.empty_cloud_frames = acc.empty_frames;
  return report;
}

std::string head_stats(const NodePtr& node) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
  for (double v : node->value) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  std::ostringstream os;
  os << "min " << lo << " max " << hi << " mean " << sum / node->value.size();
  return os.str();
}

void write_double(std::ostringstream& os, double v) {
  os << std::setprecision(17) << v;
}

}  // namespace

FramePrediction predict_frames(const PredictorModel& model, const SequenceSample& sample) {
  ModelOutput out = model.predict(sample.past, /*training=*/false);
  FramePrediction pred;
  const SensorModel& sensor = sample.past[0].sensor;
  const int f = out.range_pred->shape[0];
  const size_t pixels = static_cast<size_t>(out.range_pred->shape[1]) *
                        out.range_pred->shape[2];
  for (int k = 0; k < f; ++k) {
    RangeImage img(sensor);
    std::vector<double> mask(pixels);
    for (size_t i = 0; i < pixels; ++i) {
      img.ranges[i] = out.range_pred->value[static_cast<size_t>(k) * pixels + i];
      mask[i] = out.mask_prob->value[static_cast<size_t>(k) * pixels + i];
    }
    pred.ranges.push_back(std::move(img));
    pred.mask_probs.push_back(std::move(mask));
  }
  return pred;
}

EvalReport evaluate(const PredictorModel& model, const std::vector<SequenceSample>& samples,
                    double mask_threshold, const Segmenter* segmenter) {
  EvalAccumulator acc;
  for (const auto& sample : samples)
    accumulate_sample(acc, predict_frames(model, sample), sample, mask_threshold, segmenter);
  return finish_report(acc);
}

EvalReport evaluate_baseline(const std::vector<SequenceSample>& samples, int future_frames,
                             const Segmenter* segmenter) {
  EvalAccumulator acc;
  for (const auto& sample : samples)
    accumulate_sample(acc, baseline_copy_last(sample.past, future_frames), sample, 0.5,
                      segmenter);
  return finish_report(acc);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainLog train(PredictorModel& model, const TrainConfig& cfg,
               const std::vector<SequenceSample>& train_set,
               const std::vector<SequenceSample>& val_set, const Segmenter* segmenter) {
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (cfg.alpha_s > 0.0 && (!segmenter || !segmenter->frozen()))
    throw ConfigError("train: alpha_s > 0 requires a pretrained frozen segmenter");
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  const uint32_t hash = model_config_hash(model.config());
  const SensorModel& sensor = train_set[0].past[0].sensor;
  const int f_frames = model.config().future_frames;
  const size_t pixels = static_cast<size_t>(model.config().input_height) *
                        model.config().input_width;

  Rng master(cfg.seed);
  Rng frame_rng = master.fork(1);
  Rng chamfer_rng = master.fork(2);
  nn::Adam opt(model.store());
  TrainLog log;
  int64_t step = 0;
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
    const bool finetune = epoch >= cfg.pretrain_epochs;
    const double lr = cfg.lr * std::pow(cfg.decay, static_cast<double>(epoch));
    const LossWeights weights{cfg.alpha_s, finetune ? 1.0 : 0.0};

    for (size_t si = 0; si < train_set.size(); ++si) {
      const SequenceSample& sample = train_set[si];
      ModelOutput out = model.forward(model.make_input(sample.past), /*training=*/true);

      LossReport report;
      NodePtr l_r = loss_range(out.range_pred, sample.future, &report.range_no_valid);
      NodePtr l_m = loss_mask(out.mask_prob, sample.future);
      NodePtr l_s = ag::make_scalar(0.0);
      if (cfg.alpha_s > 0.0)
        l_s = aux_semantic_loss(out, sample.future, *segmenter, frame_rng);
      NodePtr l_c = ag::make_scalar(0.0);
      if (finetune) {
        ChamferGraphOptions copt;
        copt.threshold = cfg.mask_threshold;
        copt.max_points = cfg.chamfer_max_points;
        NodePtr sum;
        for (int k = 0; k < f_frames; ++k) {
          std::vector<double> mask(out.mask_prob->value.begin() + k * pixels,
                                   out.mask_prob->value.begin() + (k + 1) * pixels);
          PointCloud gt_cloud = range_image_to_cloud(sample.future[k], sensor);
          NodePtr frame = chamfer_frame_loss(out.range_pred, k, mask, gt_cloud, sensor,
                                             copt, &chamfer_rng);
          if (!frame) {
            frame = ag::make_scalar(kEmptyCloudChamfer);
            report.chamfer_skipped = true;
          }
          report.per_step_chamfer.push_back(frame->value[0]);
          sum = sum ? ag::add(sum, frame) : frame;
        }
        l_c = ag::mul_scalar(sum, 1.0 / static_cast<double>(f_frames));
      }

      NodePtr total = total_loss(l_r, l_m, l_s, l_c, weights);
      report.l_r = l_r->value[0];
      report.l_m = l_m->value[0];
      report.l_s = l_s->value[0];
      report.l_c = l_c->value[0];
      report.total = total->value[0];
      if (!std::isfinite(report.total)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << " sample " << si
           << " (l_r " << report.l_r << ", l_m " << report.l_m << ", l_s " << report.l_s
           << ", l_c " << report.l_c << "); range head " << head_stats(out.range_pred)
           << "; mask head " << head_stats(out.mask_prob);
        throw NumericError(os.str());
      }

      model.store().zero_grad();
      ag::backward(total);
      opt.step(lr);
      ++step;
      log.steps.push_back({step, epoch, finetune, lr, std::move(report)});
    }

    EpochRecord er;
    er.epoch = epoch;
    er.finetune = finetune;
    er.lr = lr;
    if (!val_set.empty()) {
      EvalReport vr = evaluate(model, val_set, cfg.mask_threshold, nullptr);
      er.val_l_r = vr.l_r;
      er.val_l_m = vr.l_m;
      er.val_mean_chamfer = vr.mean_chamfer;
      er.selection = finetune ? vr.mean_chamfer : vr.l_r + vr.l_m;
      if (er.selection < best) {
        best = er.selection;
        er.best = true;
        if (!cfg.out_dir.empty())
          save_checkpoint(cfg.out_dir + "/ckpt_best.rctf", model.store(), hash, step);
      }
    }
    log.epochs.push_back(er);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(cfg.out_dir + "/ckpt_epoch" + std::to_string(epoch) + ".rctf",
                      model.store(), hash, step);
  }
  if (!cfg.out_dir.empty())
    save_checkpoint(cfg.out_dir + "/ckpt_final.rctf", model.store(), hash, step);
  return log;
}

OverfitResult overfit_single_sequence(PredictorModel& model, const SequenceSample& sample,
                                      int steps, double lr, double mask_threshold) {
  OverfitResult result;
  result.initial_l_r = plain_loss_range(predict_frames(model, sample), sample.future);

  nn::Adam opt(model.store());
  for (int s = 0; s < steps; ++s) {
    ModelOutput out = model.forward(model.make_input(sample.past), /*training=*/true);
    NodePtr l_r = loss_range(out.range_pred, sample.future);
    NodePtr total = ag::add(l_r, loss_mask(out.mask_prob, sample.future));
    result.l_r_trace.push_back(l_r->value[0]);
    model.store().zero_grad();
    ag::backward(total);
    opt.step(lr);
  }

  FramePrediction final_pred = predict_frames(model, sample);
  result.final_l_r = plain_loss_range(final_pred, sample.future);

  EvalAccumulator model_acc, base_acc;
  accumulate_sample(model_acc, final_pred, sample, mask_threshold, nullptr);
  accumulate_sample(base_acc,
                    baseline_copy_last(sample.past, static_cast<int>(sample.future.size())),
                    sample, mask_threshold, nullptr);
  result.model_per_step_chamfer = finish_report(model_acc).per_step_chamfer;
  result.baseline_per_step_chamfer = finish_report(base_acc).per_step_chamfer;
  return result;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string train_log_jsonl(const TrainLog& log) {
  std::ostringstream os;
  for (const auto& s : log.steps) {
    os << "{\"type\":\"step\",\"step\":" << s.step << ",\"epoch\":" << s.epoch
       << ",\"phase\":\"" << (s.finetune ? "finetune" : "pretrain") << "\",\"lr\":";
    write_double(os, s.lr);
    os << ",\"l_r\":";
    write_double(os, s.report.l_r);
    os << ",\"l_m\":";
    write_double(os, s.report.l_m);
    os << ",\"l_s\":";
    write_double(os, s.report.l_s);
    os << ",\"l_c\":";
    write_double(os, s.report.l_c);
    os << ",\"total\":";
    write_double(os, s.report.total);
    os << "}\n";
  }
  for (const auto& e : log.epochs) {
    os << "{\"type\":\"epoch\",\"epoch\":" << e.epoch << ",\"phase\":\""
       << (e.finetune ? "finetune" : "pretrain") << "\",\"lr\":";
    write_double(os, e.lr);
    os << ",\"val_l_r\":";
    write_double(os, e.val_l_r);
    os << ",\"val_l_m\":";
    write_double(os, e.val_l_m);
    os << ",\"val_mean_chamfer\":";
    write_double(os, e.val_mean_chamfer);
    os << ",\"best\":" << (e.best ? "true" : "false") << "}\n";
  }
  return os.str();
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(18) << "prediction step" << "chamfer (m^2)\n";
  for (size_t i = 0; i < per_step_chamfer.size(); ++i)
    os << std::left << std::setw(18) << (i + 1) << std::setprecision(6) << std::fixed
       << per_step_chamfer[i] << "\n";
  os << std::left << std::setw(18) << "mean" << std::setprecision(6) << std::fixed
     << mean_chamfer << "\n";
  os << std::defaultfloat << std::setprecision(6);
  os << "l_r " << l_r << "  l_m " << l_m << "\n";
  if (has_similarity)
    os << "semantic similarity " << similarity << (similarity_capped ? " (capped)" : "")
       << "\n";
  if (empty_cloud_frames > 0)
    os << "warning: " << empty_cloud_frames << " empty-cloud frames substituted with "
       << kEmptyCloudChamfer << "\n";
  return os.str();
}

std::string EvalReport::to_jsonl() const {
  std::ostringstream os;
  for (size_t i = 0; i < per_step_chamfer.size(); ++i) {
    os << "{\"type\":\"chamfer\",\"step\":" << (i + 1) << ",\"value\":";
    write_double(os, per_step_chamfer[i]);
    os << "}\n";
  }
  os << "{\"type\":\"summary\",\"mean_chamfer\":";
  write_double(os, mean_chamfer);
  os << ",\"l_r\":";
  write_double(os, l_r);
  os << ",\"l_m\":";
  write_double(os, l_m);
  if (has_similarity) {
    os << ",\"similarity\":";
    write_double(os, similarity);
    os << ",\"similarity_capped\":" << (similarity_capped ? "true" : "false");
  }
  os << ",\"empty_cloud_frames\":" << empty_cloud_frames << "}\n";
  return os.str();
}

}  // namespace rangecast
