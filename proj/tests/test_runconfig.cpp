#include <cstdlib>

#include "doctest.h"
#include "rangecast/runconfig.hpp"

using namespace rangecast;

namespace {

const char* kToyConfig =
    "[sensor]\n"
    "h = 16\n"
    "w = 64\n"
    "fov_up_deg = 15\n"
    "fov_down_deg = 15\n"
    "r_max = 30\n"
    "\n"
    "[model]\n"
    "channels = 8,16,32\n"
    "layers = 2\n"
    "heads = 4\n"
    "past = 5\n"
    "future = 5\n"
    "\n"
    "[train]\n"
    "lr = 0.001\n"
    "epochs = 4\n"
    "pretrain_epochs = 3\n"
    "\n"
    "[output]\n"
    "dir = /tmp/run\n";

}  // namespace

TEST_CASE("config parsing wires sections into the run plan") {
  const RunConfig cfg = parse_run_config(kToyConfig, false);
  CHECK(cfg.sensor_h == 16);
  CHECK(cfg.sensor_w == 64);
  CHECK(cfg.r_max == 30.0);
  CHECK(cfg.model.channels == std::vector<int>{8, 16, 32});
  CHECK(cfg.model.input_height == 16);
  CHECK(cfg.model.input_width == 64);
  CHECK(cfg.model.max_range == 30.0);
  CHECK(cfg.train.pretrain_epochs == 3);
  CHECK(cfg.train.finetune_epochs == 1);
  CHECK(cfg.out_dir == "/tmp/run");
  CHECK(cfg.train.out_dir == "/tmp/run");
  CHECK(cfg.sensor().width_px == 64);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("defaults fill everything a file omits") {
  const RunConfig cfg = parse_run_config("", false);
  CHECK(cfg.sensor_h == 64);
  CHECK(cfg.sensor_w == 2048);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.decay == 0.99);
  CHECK(cfg.data.manifest.empty());
  CHECK(cfg.data.synth_frames == 10);
}

TEST_CASE("epochs without pretrain_epochs means no fine-tuning") {
  const RunConfig cfg = parse_run_config("[train]\nepochs = 6\n", false);
  CHECK(cfg.train.pretrain_epochs == 6);
  CHECK(cfg.train.finetune_epochs == 0);
}

TEST_CASE("unknown sections and keys are rejected with the line number") {
  CHECK_THROWS_AS(parse_run_config("[sensor]\nheight = 16\n", false), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[rocket]\nthrust = 9000\n", false), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[sensor]\nh 16\n", false), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[sensor]\nh = sixteen\n", false), ConfigError);
  try {
    parse_run_config("[sensor]\n\nheight = 16\n", false);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("environment variables override file values") {
  setenv("RANGECAST_TRAIN_LR", "0.5", 1);
  setenv("RANGECAST_OUTPUT_DIR", "/tmp/env_out", 1);
  const RunConfig cfg = parse_run_config(kToyConfig, true);
  unsetenv("RANGECAST_TRAIN_LR");
  unsetenv("RANGECAST_OUTPUT_DIR");
  CHECK(cfg.train.lr == 0.5);
  CHECK(cfg.out_dir == "/tmp/env_out");

  setenv("RANGECAST_TRAIN_LR", "fast", 1);
  CHECK_THROWS_AS(parse_run_config(kToyConfig, true), ConfigError);
  unsetenv("RANGECAST_TRAIN_LR");
}

TEST_CASE("a rendered snapshot parses back to an equivalent config") {
  RunConfig cfg = parse_run_config(kToyConfig, false);
  cfg.train.alpha_s = 1.0;
  cfg.data.synth_boxes = 5;
  cfg.model.branch = BranchMode::h_only;
  const std::string text = render_run_config(cfg);
  const RunConfig back = parse_run_config(text, false);
  CHECK(render_run_config(back) == text);
  CHECK(back.train.alpha_s == 1.0);
  CHECK(back.data.synth_boxes == 5);
  CHECK(back.model.branch == BranchMode::h_only);
  CHECK(back.train.pretrain_epochs == cfg.train.pretrain_epochs);
  CHECK(back.train.finetune_epochs == cfg.train.finetune_epochs);
}

TEST_CASE("synthetic scene configs derive per-sequence seeds") {
  const RunConfig cfg = parse_run_config("[data]\nsynth_seed = 100\n", false);
  CHECK(cfg.data.scene(0).seed == 100);
  CHECK(cfg.data.scene(3).seed == 103);
  CHECK(cfg.data.scene(0).n_frames == cfg.data.synth_frames);
}
