#include "rangecast/runconfig.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace rangecast {

namespace {

const std::map<std::string, std::vector<std::string>> kKnownKeys = {
    {"sensor", {"h", "w", "fov_up_deg", "fov_down_deg", "r_max"}},
    {"model", {"channels", "layers", "heads", "ff_width", "branch", "past", "future",
               "seed"}},
    {"train", {"lr", "decay", "epochs", "pretrain_epochs", "alpha_s", "mask_threshold",
               "chamfer_max_points", "checkpoint_every", "seed"}},
    {"data", {"manifest", "val_manifest", "stride", "synth_sequences", "synth_frames",
              "synth_boxes", "synth_speed_min", "synth_speed_max", "synth_extent",
              "synth_seed"}},
    {"output", {"dir"}},
};

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool known_key(const std::string& section, const std::string& key) {
  auto it = kKnownKeys.find(section);
  if (it == kKnownKeys.end()) return false;
  for (const auto& k : it->second)
    if (k == key) return true;
  return false;
}

std::string env_name(const std::string& section, const std::string& key) {
  std::string name = "RANGECAST_" + section + "_" + key;
  for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

using KeyMap = std::map<std::string, std::map<std::string, std::string>>;

KeyMap parse_ini(const std::string& text) {
  KeyMap out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (kKnownKeys.find(section) == kKnownKeys.end())
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
    const std::string key = trim(line.substr(0, eq));
    if (!known_key(section, key))
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " +
                        section + "." + key);
    out[section][key] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_env_overrides(KeyMap& keys) {
  for (const auto& [section, names] : kKnownKeys)
    for (const auto& key : names)
      if (const char* v = std::getenv(env_name(section, key).c_str()))
        keys[section][key] = v;
}

class Reader {
 public:
  explicit Reader(const KeyMap& keys) : keys_(keys) {}

  bool has(const std::string& section, const std::string& key) const {
    auto s = keys_.find(section);
    return s != keys_.end() && s->second.find(key) != s->second.end();
  }
  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    return has(section, key) ? keys_.at(section).at(key) : fallback;
  }
  double num(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = keys_.at(section).at(key);
    size_t used = 0;
    double out;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      throw ConfigError("config key " + section + "." + key + ": not a number: " + v);
    }
    if (used != v.size())
      throw ConfigError("config key " + section + "." + key + ": not a number: " + v);
    return out;
  }
  int integer(const std::string& section, const std::string& key, int fallback) const {
    const double v = num(section, key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError("config key " + section + "." + key + ": expected an integer");
    return i;
  }
  std::vector<int> int_list(const std::string& section, const std::string& key,
                            const std::vector<int>& fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<int> out;
    std::istringstream in(keys_.at(section).at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError("config key " + section + "." + key + ": bad list entry: " + item);
      }
    }
    if (out.empty())
      throw ConfigError("config key " + section + "." + key + ": empty list");
    return out;
  }

 private:
  const KeyMap& keys_;
};

}  // namespace

SyntheticSceneConfig DataConfig::scene(uint64_t seq_index) const {
  SyntheticSceneConfig cfg;
  cfg.seed = synth_seed + seq_index;
  cfg.n_frames = synth_frames;
  cfg.n_boxes = synth_boxes;
  cfg.box_speed_min = synth_speed_min;
  cfg.box_speed_max = synth_speed_max;
  cfg.world_extent = synth_extent;
  return cfg;
}

SensorModel RunConfig::sensor() const {
  return SensorModel::from_degrees(sensor_h, sensor_w, fov_up_deg, fov_down_deg, r_max);
}

void RunConfig::validate() const {
  sensor().validate();
  model.validate();
  train.validate();
  if (data.stride < 1) throw ConfigError("data.stride must be >= 1");
  if (data.manifest.empty()) {
    if (data.synth_sequences < 1) throw ConfigError("data.synth_sequences must be >= 1");
    data.scene(0).validate(model.past_frames + model.future_frames);
  }
}

RunConfig parse_run_config(const std::string& text, bool apply_env) {
  KeyMap keys = parse_ini(text);
  if (apply_env) apply_env_overrides(keys);
  Reader r(keys);
  RunConfig cfg;

  cfg.sensor_h = r.integer("sensor", "h", cfg.sensor_h);
  cfg.sensor_w = r.integer("sensor", "w", cfg.sensor_w);
  cfg.fov_up_deg = r.num("sensor", "fov_up_deg", cfg.fov_up_deg);
  cfg.fov_down_deg = r.num("sensor", "fov_down_deg", cfg.fov_down_deg);
  cfg.r_max = r.num("sensor", "r_max", cfg.r_max);

  cfg.model.channels = r.int_list("model", "channels", cfg.model.channels);
  cfg.model.attn_layers = r.integer("model", "layers", cfg.model.attn_layers);
  cfg.model.attn_heads = r.integer("model", "heads", cfg.model.attn_heads);
  cfg.model.attn_ff_width = r.integer("model", "ff_width", cfg.model.attn_ff_width);
  cfg.model.branch = branch_mode_from_string(
      r.str("model", "branch", branch_mode_name(cfg.model.branch)));
  cfg.model.past_frames = r.integer("model", "past", cfg.model.past_frames);
  cfg.model.future_frames = r.integer("model", "future", cfg.model.future_frames);
  cfg.model.seed = static_cast<uint64_t>(r.integer("model", "seed", 0));
  cfg.model.input_height = cfg.sensor_h;
  cfg.model.input_width = cfg.sensor_w;
  cfg.model.max_range = cfg.r_max;

  cfg.train.lr = r.num("train", "lr", cfg.train.lr);
  cfg.train.decay = r.num("train", "decay", cfg.train.decay);
  const int epochs = r.integer("train", "epochs", 1);
  const int pretrain = r.integer("train", "pretrain_epochs", epochs);
  if (pretrain > epochs)
    throw ConfigError("train.pretrain_epochs exceeds train.epochs");
  cfg.train.pretrain_epochs = pretrain;
  cfg.train.finetune_epochs = epochs - pretrain;
  cfg.train.alpha_s = r.num("train", "alpha_s", cfg.train.alpha_s);
  cfg.train.mask_threshold = r.num("train", "mask_threshold", cfg.train.mask_threshold);
  cfg.train.chamfer_max_points =
      r.integer("train", "chamfer_max_points", cfg.train.chamfer_max_points);
  cfg.train.checkpoint_every =
      r.integer("train", "checkpoint_every", cfg.train.checkpoint_every);
  cfg.train.seed = static_cast<uint64_t>(r.integer("train", "seed", 0));

  cfg.data.manifest = r.str("data", "manifest", cfg.data.manifest);
  cfg.data.val_manifest = r.str("data", "val_manifest", cfg.data.val_manifest);
  cfg.data.stride = r.integer("data", "stride", cfg.data.stride);
  cfg.data.synth_sequences = r.integer("data", "synth_sequences", cfg.data.synth_sequences);
  cfg.data.synth_frames = r.integer("data", "synth_frames", cfg.data.synth_frames);
  cfg.data.synth_boxes = r.integer("data", "synth_boxes", cfg.data.synth_boxes);
  cfg.data.synth_speed_min = r.num("data", "synth_speed_min", cfg.data.synth_speed_min);
  cfg.data.synth_speed_max = r.num("data", "synth_speed_max", cfg.data.synth_speed_max);
  cfg.data.synth_extent = r.num("data", "synth_extent", cfg.data.synth_extent);
  cfg.data.synth_seed = static_cast<uint64_t>(r.integer("data", "synth_seed", 0));

  cfg.out_dir = r.str("output", "dir", cfg.out_dir);
  cfg.train.out_dir = cfg.out_dir;
  return cfg;
}

RunConfig load_run_config(const std::string& path, bool apply_env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), apply_env);
}

std::string render_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "[sensor]\n";
  os << "h = " << cfg.sensor_h << "\n";
  os << "w = " << cfg.sensor_w << "\n";
  os << "fov_up_deg = " << cfg.fov_up_deg << "\n";
  os << "fov_down_deg = " << cfg.fov_down_deg << "\n";
  os << "r_max = " << cfg.r_max << "\n\n";

  os << "[model]\n";
  os << "channels = ";
  for (size_t i = 0; i < cfg.model.channels.size(); ++i)
    os << (i ? "," : "") << cfg.model.channels[i];
  os << "\n";
  os << "layers = " << cfg.model.attn_layers << "\n";
  os << "heads = " << cfg.model.attn_heads << "\n";
  os << "ff_width = " << cfg.model.attn_ff_width << "\n";
  os << "branch = " << branch_mode_name(cfg.model.branch) << "\n";
  os << "past = " << cfg.model.past_frames << "\n";
  os << "future = " << cfg.model.future_frames << "\n";
  os << "seed = " << cfg.model.seed << "\n\n";

  os << "[train]\n";
  os << "lr = " << cfg.train.lr << "\n";
  os << "decay = " << cfg.train.decay << "\n";
  os << "epochs = " << cfg.train.total_epochs() << "\n";
  os << "pretrain_epochs = " << cfg.train.pretrain_epochs << "\n";
  os << "alpha_s = " << cfg.train.alpha_s << "\n";
  os << "mask_threshold = " << cfg.train.mask_threshold << "\n";
  os << "chamfer_max_points = " << cfg.train.chamfer_max_points << "\n";
  os << "checkpoint_every = " << cfg.train.checkpoint_every << "\n";
  os << "seed = " << cfg.train.seed << "\n\n";

  os << "[data]\n";
  os << "manifest = " << cfg.data.manifest << "\n";
  os << "val_manifest = " << cfg.data.val_manifest << "\n";
  os << "stride = " << cfg.data.stride << "\n";
  os << "synth_sequences = " << cfg.data.synth_sequences << "\n";
  os << "synth_frames = " << cfg.data.synth_frames << "\n";
  os << "synth_boxes = " << cfg.data.synth_boxes << "\n";
  os << "synth_speed_min = " << cfg.data.synth_speed_min << "\n";
  os << "synth_speed_max = " << cfg.data.synth_speed_max << "\n";
  os << "synth_extent = " << cfg.data.synth_extent << "\n";
  os << "synth_seed = " << cfg.data.synth_seed << "\n\n";

  os << "[output]\n";
  os << "dir = " << cfg.out_dir << "\n";
  return os.str();
}

}  // namespace rangecast
