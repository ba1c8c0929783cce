#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rangecast/gradcheck.hpp"
#include "rangecast/runconfig.hpp"

namespace fs = std::filesystem;
using namespace rangecast;

namespace {

struct CliOptions {
  std::string config_path;
  int64_t seed = -1;  // < 0 keeps the config values
  int threads = 1;
  std::string out_override;
  std::string checkpoint;
  std::string segmenter_path;
};

RunConfig setup(const CliOptions& cli) {
  if (cli.config_path.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_run_config(cli.config_path);
  if (cli.seed >= 0) {
    cfg.model.seed = static_cast<uint64_t>(cli.seed);
    cfg.train.seed = static_cast<uint64_t>(cli.seed);
    cfg.data.synth_seed = static_cast<uint64_t>(cli.seed);
  }
  if (!cli.out_override.empty()) cfg.out_dir = cli.out_override;
  cfg.train.out_dir = cfg.out_dir;
  fs::create_directories(cfg.out_dir);
  std::ofstream snapshot(cfg.out_dir + "/config_resolved.ini");
  snapshot << render_run_config(cfg);
  return cfg;
}

std::string seq_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "seq%03d", i);
  return buf;
}

std::string frame_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame%04d%s", i, ext);
  return buf;
}

struct Datasets {
  std::vector<SequenceSample> train, val;
};

Datasets build_datasets(const RunConfig& cfg) {
  const SensorModel sensor = cfg.sensor();
  const int p = cfg.model.past_frames, f = cfg.model.future_frames;
  Datasets d;
  if (!cfg.data.manifest.empty()) {
    d.train = window_sequences(load_manifest(cfg.data.manifest, sensor, "train"), p, f,
                               cfg.data.stride);
    if (!cfg.data.val_manifest.empty())
      d.val = window_sequences(load_manifest(cfg.data.val_manifest, sensor, "val"), p, f,
                               cfg.data.stride);
    return d;
  }
  const int n = cfg.data.synth_sequences;
  const int n_val = n > 1 ? std::max(1, n / 5) : 0;
  for (int s = 0; s < n; ++s) {
    auto frames = generate_synthetic_frames(cfg.data.scene(static_cast<uint64_t>(s)), sensor);
    auto samples = window_frames(frames, p, f, cfg.data.stride);
    auto& dst = s >= n - n_val ? d.val : d.train;
    dst.insert(dst.end(), samples.begin(), samples.end());
  }
  return d;
}

SegmenterConfig segmenter_config(const RunConfig& cfg) {
  SegmenterConfig scfg;
  scfg.max_range = cfg.r_max;
  scfg.seed = cfg.train.seed;
  return scfg;
}

Segmenter load_frozen_segmenter(const std::string& path, const RunConfig& cfg) {
  Segmenter seg(segmenter_config(cfg));
  load_checkpoint(path, seg.store(), segmenter_config_hash(seg.config()));
  seg.freeze();
  return seg;
}

std::string default_segmenter_path(const CliOptions& cli, const RunConfig& cfg) {
  return cli.segmenter_path.empty() ? cfg.out_dir + "/segmenter.rctf" : cli.segmenter_path;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(const CliOptions& cli) {
  RunConfig cfg = setup(cli);
  const SensorModel sensor = cfg.sensor();
  for (int s = 0; s < cfg.data.synth_sequences; ++s) {
    const fs::path dir = fs::path(cfg.out_dir) / seq_name(s);
    fs::create_directories(dir);
    const auto scans =
        generate_synthetic_sequence(cfg.data.scene(static_cast<uint64_t>(s)), sensor);
    std::ofstream manifest(dir / "manifest.txt");
    manifest << "# synthetic sequence " << s << ", seed "
             << cfg.data.synth_seed + static_cast<uint64_t>(s) << "\n";
    for (const auto& scan : scans) {
      const std::string scan_name = frame_name(scan.frame_index, ".bin");
      write_kitti_scan_file((dir / scan_name).string(), scan.cloud);
      write_label_file((dir / frame_name(scan.frame_index, ".label")).string(),
                       scan.cloud.classes);
      manifest << scan_name << "\n";
    }
  }
  std::cout << "wrote " << cfg.data.synth_sequences << " sequences of "
            << cfg.data.synth_frames << " frames to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_pretrain_seg(const CliOptions& cli) {
  RunConfig cfg = setup(cli);
  const SensorModel sensor = cfg.sensor();
  std::vector<LabeledRangeImage> frames;
  for (int s = 0; s < cfg.data.synth_sequences; ++s) {
    auto seq = generate_synthetic_frames(cfg.data.scene(static_cast<uint64_t>(s)), sensor);
    frames.insert(frames.end(), seq.begin(), seq.end());
  }
  if (frames.size() < 2) throw DataError("pretrain-seg: need at least 2 synthetic frames");
  const size_t n_held = std::max<size_t>(1, frames.size() / 5);
  std::vector<LabeledRangeImage> heldout(frames.end() - n_held, frames.end());
  frames.resize(frames.size() - n_held);

  Segmenter seg(segmenter_config(cfg));
  PretrainResult result =
      pretrain_segmenter(seg, frames, heldout, cfg.train.total_epochs(), cfg.train.lr);
  const std::string path = default_segmenter_path(cli, cfg);
  save_checkpoint(path, seg.store(), segmenter_config_hash(seg.config()), 0);
  std::cout << "held-out pixel accuracy " << result.heldout_accuracy << "\n"
            << "segmenter saved to " << path << "\n";
  return 0;
}

int cmd_train(const CliOptions& cli) {
  RunConfig cfg = setup(cli);
  cfg.validate();
  Datasets data = build_datasets(cfg);
  PredictorModel model(cfg.model);

  std::unique_ptr<Segmenter> seg;
  if (cfg.train.alpha_s > 0.0)
    seg = std::make_unique<Segmenter>(load_frozen_segmenter(
        default_segmenter_path(cli, cfg), cfg));

  TrainLog log = train(model, cfg.train, data.train, data.val, seg.get());
  std::ofstream(cfg.out_dir + "/train_log.jsonl") << train_log_jsonl(log);
  std::cout << "trained " << log.steps.size() << " steps over " << cfg.train.total_epochs()
            << " epochs; final total loss " << log.steps.back().report.total << "\n"
            << "log: " << cfg.out_dir << "/train_log.jsonl\n";
  return 0;
}

std::vector<SequenceSample> eval_samples(const RunConfig& cfg) {
  Datasets data = build_datasets(cfg);
  std::vector<SequenceSample> samples = data.val.empty() ? data.train : data.val;
  if (samples.empty()) throw DataError("eval: no samples available from the data config");
  return samples;
}

int cmd_eval(const CliOptions& cli) {
  RunConfig cfg = setup(cli);
  cfg.validate();
  const std::vector<SequenceSample> samples = eval_samples(cfg);

  PredictorModel model(cfg.model);
  const std::string ckpt =
      cli.checkpoint.empty() ? cfg.out_dir + "/ckpt_final.rctf" : cli.checkpoint;
  load_checkpoint(ckpt, model.store(), model_config_hash(cfg.model));

  std::unique_ptr<Segmenter> seg;
  const std::string seg_path = default_segmenter_path(cli, cfg);
  if (fs::exists(seg_path))
    seg = std::make_unique<Segmenter>(load_frozen_segmenter(seg_path, cfg));

  EvalReport report = evaluate(model, samples, cfg.train.mask_threshold, seg.get());
  EvalReport baseline = evaluate_baseline(samples, cfg.model.future_frames, seg.get());
  std::cout << "model (" << ckpt << "):\n" << report.to_text() << "\n"
            << "copy-last baseline:\n" << baseline.to_text();
  std::ofstream(cfg.out_dir + "/eval.jsonl") << report.to_jsonl();
  return 0;
}

int cmd_predict(const CliOptions& cli) {
  RunConfig cfg = setup(cli);
  cfg.validate();
  const std::vector<SequenceSample> samples = eval_samples(cfg);

  PredictorModel model(cfg.model);
  const std::string ckpt =
      cli.checkpoint.empty() ? cfg.out_dir + "/ckpt_final.rctf" : cli.checkpoint;
  load_checkpoint(ckpt, model.store(), model_config_hash(cfg.model));

  const SensorModel sensor = cfg.sensor();
  const fs::path dir = fs::path(cfg.out_dir) / "predicted";
  fs::create_directories(dir);
  int written = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    FramePrediction pred = predict_frames(model, samples[i]);
    for (size_t f = 0; f < pred.ranges.size(); ++f) {
      PointCloud cloud = range_image_to_cloud(pred.ranges[f], pred.mask_probs[f],
                                              cfg.train.mask_threshold, sensor);
      char buf[48];
      std::snprintf(buf, sizeof buf, "sample%03zu_step%02zu.bin", i, f + 1);
      write_kitti_scan_file((dir / buf).string(), cloud);
      ++written;
    }
  }
  std::cout << "wrote " << written << " predicted scans to " << dir.string() << "\n";
  return 0;
}

int cmd_info(const CliOptions& cli) {
  RunConfig cfg = setup(cli);
  cfg.model.validate();
  PredictorModel model(cfg.model);
  const ModelComplexity c = model.complexity();
  std::cout << "branch mode      " << branch_mode_name(cfg.model.branch) << "\n";
  std::cout << "parameters       " << c.params << "\n";
  std::cout << "forward MACs     " << c.macs << "\n";
  std::cout << "forward FLOPs    " << 2 * c.macs << "\n\n";
  for (const auto& line : model.complexity_report()) std::cout << line << "\n";
  return 0;
}

int cmd_gradcheck(const CliOptions& cli) {
  const uint64_t seed = cli.seed >= 0 ? static_cast<uint64_t>(cli.seed) : 0;
  const auto results = ag::run_gradcheck_suite(seed);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-24s max rel err %.3e  %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) throw NumericError("gradcheck: finite-difference suite failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"range-image point cloud sequence prediction"};
  app.require_subcommand(1);

  CliOptions cli;
  app.add_option("--config", cli.config_path, "run config file (INI)");
  app.add_option("--seed", cli.seed, "override all seeds in the config");
  app.add_option("--threads", cli.threads, "worker threads (1 = bit-deterministic)")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", cli.out_override, "override the output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* preseg = app.add_subcommand("pretrain-seg", "pretrain and freeze the segmenter");
  auto* train_cmd = app.add_subcommand("train", "train the predictor");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* predict = app.add_subcommand("predict", "emit predicted scans as KITTI files");
  auto* info = app.add_subcommand("info", "parameter and FLOP report");
  auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference suite");

  // let the shared flags appear after the subcommand name as well
  for (auto* cmd : {synth, preseg, train_cmd, eval_cmd, predict, info, gradcheck})
    cmd->fallthrough();
  for (auto* cmd : {train_cmd, eval_cmd, predict, preseg})
    cmd->add_option("--segmenter", cli.segmenter_path, "segmenter checkpoint path");
  for (auto* cmd : {eval_cmd, predict})
    cmd->add_option("--ckpt", cli.checkpoint, "model checkpoint path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(cli);
    if (preseg->parsed()) return cmd_pretrain_seg(cli);
    if (train_cmd->parsed()) return cmd_train(cli);
    if (eval_cmd->parsed()) return cmd_eval(cli);
    if (predict->parsed()) return cmd_predict(cli);
    if (info->parsed()) return cmd_info(cli);
    if (gradcheck->parsed()) return cmd_gradcheck(cli);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
