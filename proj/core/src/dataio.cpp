#include "rangecast/dataio.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace rangecast {

namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(bits & 0xff);
  out.push_back((bits >> 8) & 0xff);
  out.push_back((bits >> 16) & 0xff);
  out.push_back((bits >> 24) & 0xff);
}

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) out.push_back((v >> (8 * i)) & 0xff);
}

class Reader {
 public:
  Reader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

  void require(size_t n, const char* what) {
    if (remaining() < n)
      throw RctfError(RctfStatus::truncated,
                      std::string("RCTF truncated while reading ") + what +
                          " at byte " + std::to_string(pos_));
  }

  uint8_t u8(const char* what) {
    require(1, what);
    return bytes_[pos_++];
  }
  uint16_t u16(const char* what) {
    require(2, what);
    uint16_t v = bytes_[pos_] | (uint16_t(bytes_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    require(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    require(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what) {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n, const char* what) {
    require(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
};

constexpr uint16_t kRctfVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// KITTI scans
// ---------------------------------------------------------------------------

PointCloud read_kitti_scan(const std::vector<uint8_t>& bytes) {
  if (bytes.size() % 16 != 0)
    throw DataError("malformed scan: length " + std::to_string(bytes.size()) +
                    " is not a multiple of 16 (trailing bytes at offset " +
                    std::to_string(bytes.size() - bytes.size() % 16) + ")");
  const size_t n = bytes.size() / 16;
  PointCloud cloud;
  cloud.points.resize(n);
  cloud.intensity.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float f[4];
    std::memcpy(f, bytes.data() + i * 16, 16);
    cloud.points[i] = Point3{f[0], f[1], f[2]};
    cloud.intensity[i] = f[3];
  }
  return cloud;
}

std::vector<uint8_t> write_kitti_scan(const PointCloud& cloud) {
  std::vector<uint8_t> out;
  out.reserve(cloud.points.size() * 16);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    put_f32(out, static_cast<float>(cloud.points[i].x));
    put_f32(out, static_cast<float>(cloud.points[i].y));
    put_f32(out, static_cast<float>(cloud.points[i].z));
    put_f32(out, cloud.intensity.empty() ? 0.0f : cloud.intensity[i]);
  }
  return out;
}

PointCloud read_kitti_scan_file(const std::string& path) {
  try {
    return read_kitti_scan(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_kitti_scan_file(const std::string& path, const PointCloud& cloud) {
  write_file_bytes(path, write_kitti_scan(cloud));
}

std::vector<int32_t> read_label_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() % 4 != 0)
    throw DataError(path + ": label file length not a multiple of 4");
  std::vector<int32_t> out(bytes.size() / 4);
  for (size_t i = 0; i < out.size(); ++i) {
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= uint32_t(bytes[i * 4 + b]) << (8 * b);
    out[i] = static_cast<int32_t>(v);
  }
  return out;
}

void write_label_file(const std::string& path, const std::vector<int32_t>& classes) {
  std::vector<uint8_t> bytes;
  bytes.reserve(classes.size() * 4);
  for (int32_t c : classes) put_le<uint32_t>(bytes, static_cast<uint32_t>(c));
  write_file_bytes(path, bytes);
}

// ---------------------------------------------------------------------------
// RCTF container
// ---------------------------------------------------------------------------

const char* rctf_status_name(RctfStatus s) {
  switch (s) {
    case RctfStatus::ok: return "ok";
    case RctfStatus::bad_magic: return "bad_magic";
    case RctfStatus::bad_version: return "bad_version";
    case RctfStatus::truncated: return "truncated";
    case RctfStatus::duplicate_name: return "duplicate_name";
    case RctfStatus::bad_shape: return "bad_shape";
  }
  return "unknown";
}

std::vector<uint8_t> save_tensors(const std::vector<NamedTensor>& tensors) {
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].numel() != tensors[i].data.size())
      throw RctfError(RctfStatus::bad_shape,
                      "RCTF: tensor '" + tensors[i].name + "' dims do not match data size");
    for (size_t j = i + 1; j < tensors.size(); ++j)
      if (tensors[i].name == tensors[j].name)
        throw RctfError(RctfStatus::duplicate_name,
                        "RCTF: duplicate tensor name '" + tensors[i].name + "'");
  }
  std::vector<uint8_t> out;
  out.push_back('R'); out.push_back('C'); out.push_back('T'); out.push_back('F');
  put_le<uint16_t>(out, kRctfVersion);
  put_le<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_le<uint16_t>(out, static_cast<uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<uint8_t>(t.dims.size()));
    for (uint64_t d : t.dims) put_le<uint64_t>(out, d);
    for (float v : t.data) put_f32(out, v);
  }
  return out;
}

std::vector<NamedTensor> load_tensors(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  r.require(4, "magic");
  if (!(bytes[0] == 'R' && bytes[1] == 'C' && bytes[2] == 'T' && bytes[3] == 'F'))
    throw RctfError(RctfStatus::bad_magic, "RCTF: bad magic");
  (void)r.str(4, "magic");
  const uint16_t version = r.u16("version");
  if (version != kRctfVersion)
    throw RctfError(RctfStatus::bad_version,
                    "RCTF: unsupported version " + std::to_string(version));
  const uint32_t count = r.u32("entry count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const uint16_t name_len = r.u16("name length");
    t.name = r.str(name_len, "name");
    for (const auto& prev : out)
      if (prev.name == t.name)
        throw RctfError(RctfStatus::duplicate_name,
                        "RCTF: duplicate tensor name '" + t.name + "'");
    const uint8_t rank = r.u8("rank");
    t.dims.resize(rank);
    for (uint8_t d = 0; d < rank; ++d) t.dims[d] = r.u64("dim");
    const uint64_t n = t.numel();
    r.require(n * 4, "payload");
    t.data.resize(n);
    for (uint64_t j = 0; j < n; ++j) t.data[j] = r.f32("payload");
    out.push_back(std::move(t));
  }
  return out;
}

void save_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
  write_file_bytes(path, save_tensors(tensors));
}

std::vector<NamedTensor> load_tensor_file(const std::string& path) {
  return load_tensors(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Manifests and windowing
// ---------------------------------------------------------------------------

DatasetManifest load_manifest(const std::string& path, const SensorModel& sensor,
                              const std::string& split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  DatasetManifest manifest;
  manifest.split = split;
  manifest.sensor = sensor;
  const fs::path base = fs::path(path).parent_path();
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const size_t e = line.find_last_not_of(" \t\r");
    std::string entry = line.substr(b, e - b + 1);
    fs::path p(entry);
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p))
      throw DataError("manifest " + path + ": missing scan file " + p.string());
    manifest.scan_paths.push_back(p.string());
  }
  return manifest;
}

std::vector<SequenceSample> window_frames(const std::vector<LabeledRangeImage>& frames,
                                          int past_frames, int future_frames,
                                          int stride) {
  if (past_frames < 1 || future_frames < 1 || stride < 1)
    throw ContractViolation("window_frames: P, F, stride must be >= 1");
  std::vector<SequenceSample> samples;
  const int window = past_frames + future_frames;
  const int n = static_cast<int>(frames.size());
  if (n < window)
    std::cerr << "warning: " << n << " frames cannot fill a window of " << window
              << " (P=" << past_frames << ", F=" << future_frames << ")\n";
  for (int start = 0; start + window <= n; start += stride) {
    SequenceSample s;
    for (int i = 0; i < past_frames; ++i) s.past.push_back(frames[start + i].image);
    bool labeled = true;
    for (int i = 0; i < future_frames; ++i) {
      const auto& f = frames[start + past_frames + i];
      s.future.push_back(f.image);
      labeled = labeled && !f.classes.empty();
    }
    if (labeled)
      for (int i = 0; i < future_frames; ++i)
        s.future_classes.push_back(frames[start + past_frames + i].classes);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<SequenceSample> window_sequences(const DatasetManifest& manifest,
                                             int past_frames, int future_frames,
                                             int stride) {
  std::vector<LabeledRangeImage> frames;
  frames.reserve(manifest.scan_paths.size());
  for (const auto& path : manifest.scan_paths) {
    PointCloud cloud = read_kitti_scan_file(path);
    const std::string label_path = fs::path(path).replace_extension(".label").string();
    if (fs::exists(label_path)) {
      auto classes = read_label_file(label_path);
      if (classes.size() != cloud.points.size())
        throw DataError(label_path + ": label count does not match point count");
      cloud.classes = std::move(classes);
      frames.push_back(build_range_image_labeled(cloud, manifest.sensor));
    } else {
      LabeledRangeImage f;
      f.image = build_range_image(cloud, manifest.sensor);
      frames.push_back(std::move(f));
    }
  }
  return window_frames(frames, past_frames, future_frames, stride);
}

}  // namespace rangecast
