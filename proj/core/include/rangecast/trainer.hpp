#pragma once

#include <string>
#include <vector>

#include "rangecast/losses.hpp"
#include "rangecast/model.hpp"
#include "rangecast/segmenter.hpp"

namespace rangecast {

struct TrainConfig {
  double lr = 1e-3;
  double decay = 0.99;         // multiplicative, per epoch
  int pretrain_epochs = 1;     // alpha_c = 0
  int finetune_epochs = 0;     // alpha_c = 1
  double alpha_s = 0.0;        // 0 or 1; 1 requires a frozen segmenter
  double mask_threshold = 0.5;
  int chamfer_max_points = 4096;  // training-time subsample cap per side
  int checkpoint_every = 0;       // epochs between cadence checkpoints; 0 = off
  uint64_t seed = 0;
  std::string out_dir;  // checkpoint directory; empty disables writing

  int total_epochs() const { return pretrain_epochs + finetune_epochs; }
  void validate() const;
};

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  bool finetune = false;
  double lr = 0.0;
  LossReport report;
};

struct EpochRecord {
  int epoch = 0;
  bool finetune = false;
  double lr = 0.0;
  double val_l_r = 0.0, val_l_m = 0.0, val_mean_chamfer = 0.0;
  double selection = 0.0;  // l_r + l_m during pretrain, mean chamfer afterwards
  bool best = false;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// Line-delimited records, one JSON object per step and epoch.
std::string train_log_jsonl(const TrainLog& log);

// ---------------------------------------------------------------------------
// Checkpoints: the RCTF container plus a numeric metadata entry holding the
// format version, a config hash (two 16-bit halves), and the step count.
// ---------------------------------------------------------------------------

uint32_t model_config_hash(const ModelConfig& cfg);

void save_checkpoint(const std::string& path, const nn::ParamStore& store,
                     uint32_t config_hash, int64_t step);
/// Loads parameters; a config-hash mismatch raises DataError.
int64_t load_checkpoint(const std::string& path, nn::ParamStore& store,
                        uint32_t expected_hash);

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

/// Two-phase optimization: pretrain epochs without the chamfer term, then
/// fine-tune epochs with it. Validates per epoch when val is non-empty and
/// keeps the best checkpoint by the phase criterion. Non-finite losses abort
/// with the sample index and output-head statistics.
TrainLog train(PredictorModel& model, const TrainConfig& cfg,
               const std::vector<SequenceSample>& train_set,
               const std::vector<SequenceSample>& val_set,
               const Segmenter* segmenter = nullptr);

constexpr double kEmptyCloudChamfer = 1e6;

struct EvalReport {
  std::vector<double> per_step_chamfer;  // mean over samples, one row per step
  double mean_chamfer = 0.0;
  double l_r = 0.0, l_m = 0.0;
  double similarity = 0.0;  // mean over evaluated frames
  bool has_similarity = false;
  bool similarity_capped = false;
  int empty_cloud_frames = 0;  // substituted with kEmptyCloudChamfer

  std::string to_text() const;
  std::string to_jsonl() const;
};

/// Full-cloud evaluation of the model over a sample set: per-step chamfer
/// rows plus a mean row; semantic similarity when a frozen segmenter and
/// labels are available.
EvalReport evaluate(const PredictorModel& model, const std::vector<SequenceSample>& samples,
                    double mask_threshold, const Segmenter* segmenter = nullptr);

/// The copy-last baseline run through the same harness.
EvalReport evaluate_baseline(const std::vector<SequenceSample>& samples,
                             int future_frames, const Segmenter* segmenter = nullptr);

/// Plain prediction for downstream serialization.
FramePrediction predict_frames(const PredictorModel& model, const SequenceSample& sample);

// ---------------------------------------------------------------------------
// Convergence smoke test
// ---------------------------------------------------------------------------

struct OverfitResult {
  double initial_l_r = 0.0;
  double final_l_r = 0.0;
  std::vector<double> l_r_trace;
  std::vector<double> model_per_step_chamfer;
  std::vector<double> baseline_per_step_chamfer;
};

/// Repeated Adam steps on one sample with alpha_c = alpha_s = 0, then a
/// chamfer comparison against the copy-last baseline.
OverfitResult overfit_single_sequence(PredictorModel& model, const SequenceSample& sample,
                                      int steps, double lr = 1e-3,
                                      double mask_threshold = 0.5);

}  // namespace rangecast
