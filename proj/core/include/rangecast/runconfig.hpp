#pragma once

#include <string>

#include "rangecast/synth.hpp"
#include "rangecast/trainer.hpp"

namespace rangecast {

/// Data source: a manifest of scan files, or a synthetic world when no
/// manifest is given.
struct DataConfig {
  std::string manifest;      // train split; empty selects synthetic data
  std::string val_manifest;  // optional validation split
  int stride = 1;
  int synth_sequences = 1;
  int synth_frames = 10;
  int synth_boxes = 2;
  double synth_speed_min = 0.1;
  double synth_speed_max = 0.5;
  double synth_extent = 20.0;
  uint64_t synth_seed = 0;

  SyntheticSceneConfig scene(uint64_t seq_index) const;
};

/// Everything one run needs, parsed from an INI-style config file with
/// sections [sensor], [model], [train], [data], [output]. Unknown sections
/// or keys are rejected. Environment variables named
/// RANGECAST_<SECTION>_<KEY> override file values.
struct RunConfig {
  // [sensor]
  int sensor_h = 64;
  int sensor_w = 2048;
  double fov_up_deg = 3.0;
  double fov_down_deg = 25.0;
  double r_max = 80.0;

  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string out_dir = "out";

  SensorModel sensor() const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& text, bool apply_env = true);
RunConfig load_run_config(const std::string& path, bool apply_env = true);

/// Resolved snapshot with every key materialized; parsing it back yields an
/// equivalent config.
std::string render_run_config(const RunConfig& cfg);

}  // namespace rangecast
