#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rangecast/geometry.hpp"

namespace rangecast {

// ---------------------------------------------------------------------------
// Scan files: raw little-endian float32 quadruples (x, y, z, intensity).
// ---------------------------------------------------------------------------

PointCloud read_kitti_scan(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> write_kitti_scan(const PointCloud& cloud);

PointCloud read_kitti_scan_file(const std::string& path);
void write_kitti_scan_file(const std::string& path, const PointCloud& cloud);

/// Per-point class ids as little-endian u32, one per scan point.
std::vector<int32_t> read_label_file(const std::string& path);
void write_label_file(const std::string& path, const std::vector<int32_t>& classes);

// ---------------------------------------------------------------------------
// RCTF tensor container.
// Layout: magic "RCTF", u16 version, u32 entry count; per entry u16 name
// length + UTF-8 name, u8 rank, u64 dims, payload as little-endian f32
// row-major.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  std::vector<uint64_t> dims;
  std::vector<float> data;

  uint64_t numel() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return n;
  }
};

enum class RctfStatus {
  ok = 0,
  bad_magic,
  bad_version,
  truncated,
  duplicate_name,
  bad_shape,
};

const char* rctf_status_name(RctfStatus s);

/// Error carrying a distinct RctfStatus code.
class RctfError : public DataError {
 public:
  RctfError(RctfStatus status, const std::string& msg)
      : DataError(msg), status_(status) {}
  RctfStatus status() const { return status_; }

 private:
  RctfStatus status_;
};

std::vector<uint8_t> save_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::vector<uint8_t>& bytes);

void save_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensor_file(const std::string& path);

// ---------------------------------------------------------------------------
// Manifests and sequence windowing.
// ---------------------------------------------------------------------------

struct ScanRecord {
  PointCloud cloud;
  int frame_index = 0;
};

/// Ordered list of scan file paths forming one consecutive sequence.
struct DatasetManifest {
  std::vector<std::string> scan_paths;
  std::string split;  // train / val / test
  SensorModel sensor;
};

/// Parses line-oriented manifest text: one path per line, '#' comments and
/// blank lines ignored. Relative paths resolve against the manifest's
/// directory. Missing files raise DataError.
DatasetManifest load_manifest(const std::string& path, const SensorModel& sensor,
                              const std::string& split = "");

/// P past + F future range images (plus future class grids when labels exist).
struct SequenceSample {
  std::vector<RangeImage> past;
  std::vector<RangeImage> future;
  std::vector<std::vector<int32_t>> future_classes;  // empty when unlabeled
};

/// Loads all frames of the manifest (with sidecar .label files when present)
/// and yields windows starting at 0, stride, 2*stride, ...
/// Returns an empty list when the manifest has fewer than P+F frames.
std::vector<SequenceSample> window_sequences(const DatasetManifest& manifest,
                                             int past_frames, int future_frames,
                                             int stride);

/// Windowing over already-built labeled frames (used by synthetic pipelines).
std::vector<SequenceSample> window_frames(const std::vector<LabeledRangeImage>& frames,
                                          int past_frames, int future_frames,
                                          int stride);

}  // namespace rangecast
