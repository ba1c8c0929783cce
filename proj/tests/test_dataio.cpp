#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rangecast/dataio.hpp"
#include "rangecast/rng.hpp"
#include "rangecast/synth.hpp"

using namespace rangecast;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "rangecast_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("KITTI scans parse little-endian float quadruples") {
  PointCloud cloud;
  cloud.points = {{1, 2, 3}, {0, 0, 1}, {-1, 0, 0}};
  cloud.intensity = {0.5f, 0.0f, 1.0f};
  const auto bytes = write_kitti_scan(cloud);
  CHECK(bytes.size() == 48);
  const PointCloud back = read_kitti_scan(bytes);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.points[i].x == cloud.points[i].x);
    CHECK(back.points[i].y == cloud.points[i].y);
    CHECK(back.points[i].z == cloud.points[i].z);
    CHECK(back.intensity[i] == cloud.intensity[i]);
  }
}

TEST_CASE("KITTI scan edge cases") {
  CHECK(read_kitti_scan({}).size() == 0);
  CHECK(write_kitti_scan({{{1, 0, 0}}, {}, {}}).size() == 16);
  CHECK_THROWS_AS(read_kitti_scan(std::vector<uint8_t>(50)), DataError);
  PointCloud big;
  big.points.resize(65536);
  CHECK(write_kitti_scan(big).size() == 1048576);
}

TEST_CASE("KITTI round trip is bit-exact on random clouds") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud cloud;
    for (int i = 0; i < 100; ++i) {
      cloud.points.push_back({static_cast<float>(rng.uniform(-50, 50)),
                              static_cast<float>(rng.uniform(-50, 50)),
                              static_cast<float>(rng.uniform(-3, 3))});
      cloud.intensity.push_back(static_cast<float>(rng.uniform(0, 1)));
    }
    const auto bytes = write_kitti_scan(cloud);
    CHECK(write_kitti_scan(read_kitti_scan(bytes)) == bytes);
  }
}

TEST_CASE("RCTF container round trip") {
  NamedTensor t;
  t.name = "w";
  t.dims = {2, 3};
  t.data = {1.0f, -2.5f, 3.25f, 0.0f, 1e-7f, 42.0f};
  const auto bytes = save_tensors({t});
  const auto back = load_tensors(bytes);
  REQUIRE(back.size() == 1);
  CHECK(back[0].name == "w");
  CHECK(back[0].dims == t.dims);
  CHECK(back[0].data == t.data);
}

TEST_CASE("empty RCTF tensor set is a 10-byte header") {
  const auto bytes = save_tensors({});
  CHECK(bytes.size() == 10);
  CHECK(load_tensors(bytes).empty());
}

TEST_CASE("RCTF errors carry distinct status codes") {
  auto status_of = [](const std::vector<uint8_t>& bytes) {
    try {
      load_tensors(bytes);
    } catch (const RctfError& e) {
      return e.status();
    }
    return RctfStatus::ok;
  };

  NamedTensor t;
  t.name = "w";
  t.dims = {3};
  t.data = {1, 2, 3};
  auto good = save_tensors({t});

  auto bad_magic = good;
  bad_magic[0] = 'X'; bad_magic[1] = 'X'; bad_magic[2] = 'X'; bad_magic[3] = 'X';
  CHECK(status_of(bad_magic) == RctfStatus::bad_magic);

  auto bad_version = good;
  bad_version[4] = 99;
  CHECK(status_of(bad_version) == RctfStatus::bad_version);

  auto truncated = good;
  truncated.resize(truncated.size() - 5);
  CHECK(status_of(truncated) == RctfStatus::truncated);

  NamedTensor t2 = t;
  CHECK_THROWS_AS(save_tensors({t, t2}), RctfError);
  // a crafted file with two identical names
  auto dup = good;
  const size_t entry = good.size() - 10;  // one full entry
  dup.insert(dup.end(), good.begin() + 10, good.end());
  dup[6] = 2;  // entry count
  (void)entry;
  CHECK(status_of(dup) == RctfStatus::duplicate_name);

  NamedTensor bad_shape = t;
  bad_shape.data.pop_back();
  CHECK_THROWS_AS(save_tensors({bad_shape}), RctfError);
}

TEST_CASE("manifest loading resolves relative paths and rejects missing files") {
  const fs::path dir = temp_dir("manifest");
  const SensorModel sensor = SensorModel::from_degrees(16, 64, 15, 15, 30);
  write_kitti_scan_file((dir / "a.bin").string(), {{{5, 0, 0}}, {}, {}});
  {
    std::ofstream m(dir / "manifest.txt");
    m << "# comment line\n\n  a.bin  \n";
  }
  const DatasetManifest manifest = load_manifest((dir / "manifest.txt").string(), sensor);
  REQUIRE(manifest.scan_paths.size() == 1);
  CHECK(read_kitti_scan_file(manifest.scan_paths[0]).size() == 1);

  {
    std::ofstream m(dir / "broken.txt");
    m << "missing.bin\n";
  }
  CHECK_THROWS_AS(load_manifest((dir / "broken.txt").string(), sensor), DataError);
}

TEST_CASE("windowing yields consecutive strided samples") {
  const SensorModel sensor = SensorModel::from_degrees(8, 16, 15, 15, 30);
  auto frames_of = [&](int n) {
    std::vector<LabeledRangeImage> frames;
    for (int i = 0; i < n; ++i) {
      LabeledRangeImage f;
      f.image = RangeImage(sensor);
      f.image.at(0, 0) = 1.0 + i;
      frames.push_back(std::move(f));
    }
    return frames;
  };
  CHECK(window_frames(frames_of(10), 5, 5, 1).size() == 1);
  CHECK(window_frames(frames_of(12), 5, 5, 1).size() == 3);
  CHECK(window_frames(frames_of(9), 5, 5, 1).empty());
  CHECK(window_frames(frames_of(30), 5, 5, 10).size() == 3);

  const auto samples = window_frames(frames_of(12), 5, 5, 1);
  CHECK(samples[1].past[0].at(0, 0) == 2.0);     // starts at frame index 1
  CHECK(samples[1].future[4].at(0, 0) == 11.0);  // ends at frame index 10
}

TEST_CASE("windowing with stride 1 covers every frame") {
  const SensorModel sensor = SensorModel::from_degrees(8, 16, 15, 15, 30);
  std::vector<LabeledRangeImage> frames(14);
  for (auto& f : frames) f.image = RangeImage(sensor);
  const auto samples = window_frames(frames, 3, 2, 1);
  std::vector<bool> seen(frames.size(), false);
  for (size_t s = 0; s < samples.size(); ++s)
    for (size_t i = 0; i < 5; ++i) seen[s + i] = true;
  for (bool b : seen) CHECK(b);
}

TEST_CASE("window_sequences picks up sidecar label files") {
  const fs::path dir = temp_dir("labeled");
  const SensorModel sensor = SensorModel::from_degrees(16, 64, 15, 15, 30);
  SyntheticSceneConfig cfg;
  cfg.seed = 9;
  cfg.n_frames = 4;
  cfg.n_boxes = 1;
  const auto scans = generate_synthetic_sequence(cfg, sensor);
  std::ofstream manifest(dir / "manifest.txt");
  for (const auto& scan : scans) {
    const std::string stem = "f" + std::to_string(scan.frame_index);
    write_kitti_scan_file((dir / (stem + ".bin")).string(), scan.cloud);
    write_label_file((dir / (stem + ".label")).string(), scan.cloud.classes);
    manifest << stem << ".bin\n";
  }
  manifest.close();
  const auto samples =
      window_sequences(load_manifest((dir / "manifest.txt").string(), sensor), 2, 2, 1);
  REQUIRE(samples.size() == 1);
  REQUIRE(samples[0].future_classes.size() == 2);
  CHECK(samples[0].future_classes[0].size() == samples[0].future[0].ranges.size());
}
