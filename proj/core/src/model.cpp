#include "rangecast/model.hpp"

#include <cmath>
#include <sstream>

namespace rangecast {

using ag::NodePtr;

BranchMode branch_mode_from_string(const std::string& s) {
  if (s == "both") return BranchMode::both;
  if (s == "h" || s == "h_only" || s == "h-only") return BranchMode::h_only;
  if (s == "w" || s == "w_only" || s == "w-only") return BranchMode::w_only;
  throw ConfigError("unknown branch mode: " + s + " (expected both/h/w)");
}

const char* branch_mode_name(BranchMode m) {
  switch (m) {
    case BranchMode::both: return "both";
    case BranchMode::h_only: return "h";
    case BranchMode::w_only: return "w";
  }
  return "?";
}

namespace {

bool is_pow2(int v) { return v >= 1 && (v & (v - 1)) == 0; }

int log2i(int v) {
  int n = 0;
  while ((1 << n) < v) ++n;
  return n;
}

}  // namespace

void ModelConfig::validate() const {
  if (past_frames < 1 || future_frames < 1)
    throw ConfigError("model: frame counts must be >= 1");
  if (channels.empty()) throw ConfigError("model: channel schedule is empty");
  for (int c : channels)
    if (c < 1) throw ConfigError("model: channel counts must be >= 1");
  const int s = stages();
  if (input_height % (1 << s) != 0 || input_width % (1 << s) != 0)
    throw ConfigError("model: input dims must be divisible by 2^stages");
  if (bottleneck_height() < 1 || bottleneck_width() < 1)
    throw ConfigError("model: encoder compresses below 1 pixel");
  if (bottleneck_channels() % attn_heads != 0)
    throw ConfigError("model: attn_heads must divide the bottleneck channel count");
  if (attn_layers < 1) throw ConfigError("model: attn_layers must be >= 1");
  if (max_range <= 0.0) throw ConfigError("model: max_range must be > 0");
  // Each branch halves one bottleneck axis down to 1.
  if (branch != BranchMode::h_only && !is_pow2(bottleneck_height()))
    throw ConfigError("model: bottleneck height " + std::to_string(bottleneck_height()) +
                      " cannot reach 1 by halving (required by the W branch)");
  if (branch != BranchMode::w_only && !is_pow2(bottleneck_width()))
    throw ConfigError("model: bottleneck width " + std::to_string(bottleneck_width()) +
                      " cannot reach 1 by halving (required by the H branch)");
}

PredictorModel::PredictorModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int s = cfg_.stages();

  int cin = 1;
  for (int i = 0; i < s; ++i) {
    EncoderStage stage;
    const std::string name = "enc" + std::to_string(i);
    stage.conv = nn::Conv3d(store_, rng, name + ".conv", cin, cfg_.channels[i],
                            {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, /*circular=*/true);
    stage.bn = nn::BatchNorm3d(store_, name + ".bn", cfg_.channels[i]);
    stage.eca = nn::Eca(store_, rng, name + ".eca", cfg_.channels[i]);
    encoder_.push_back(std::move(stage));
    cin = cfg_.channels[i];
  }

  branch_w_ = make_branch(rng, "branch_w", /*compress_height=*/true);
  branch_h_ = make_branch(rng, "branch_h", /*compress_height=*/false);

  const int c_bot = cfg_.bottleneck_channels();
  const int fuse_in = cfg_.branch == BranchMode::both ? 2 * c_bot : c_bot;
  fuse_eca_ = nn::Eca(store_, rng, "fuse.eca", fuse_in);
  fuse_conv_ = nn::Conv3d(store_, rng, "fuse.conv", fuse_in, c_bot, {1, 1, 1},
                          {1, 1, 1}, {0, 0, 0}, false);

  for (int i = s - 1; i >= 0; --i) {
    DecoderStage stage;
    const std::string name = "dec" + std::to_string(i);
    const int in_ch = 2 * cfg_.channels[i];  // skip concatenated on channels
    const int out_ch = i == 0 ? cfg_.channels[0] : cfg_.channels[i - 1];
    stage.conv = nn::ConvTranspose3d(store_, rng, name + ".conv", in_ch, out_ch,
                                     {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, /*circular=*/true);
    stage.bn = nn::BatchNorm3d(store_, name + ".bn", out_ch);
    stage.eca = nn::Eca(store_, rng, name + ".eca", out_ch);
    decoder_.push_back(std::move(stage));
  }

  head_ = nn::Conv3d(store_, rng, "head.conv", cfg_.channels[0], 2, {1, 1, 1},
                     {1, 1, 1}, {0, 0, 0}, false);

  if (cfg_.past_frames != cfg_.future_frames) {
    temporal_ = nn::Linear(store_, rng, "head.temporal", cfg_.past_frames,
                           cfg_.future_frames);
    has_temporal_ = true;
  }
}

PredictorModel::Branch PredictorModel::make_branch(Rng& rng, const std::string& name,
                                                   bool compress_height) {
  Branch branch;
  branch.compress_height = compress_height;
  const int c = cfg_.bottleneck_channels();
  const int axis_extent = compress_height ? cfg_.bottleneck_height() : cfg_.bottleneck_width();
  const int kept_extent = compress_height ? cfg_.bottleneck_width() : cfg_.bottleneck_height();
  const std::array<int, 3> stride =
      compress_height ? std::array<int, 3>{1, 2, 1} : std::array<int, 3>{1, 1, 2};
  const int n_down = log2i(axis_extent);
  for (int i = 0; i < n_down; ++i)
    branch.down.push_back(nn::Conv3d(store_, rng, name + ".down" + std::to_string(i),
                                     c, c, {3, 3, 3}, stride, {1, 1, 1}, true));
  for (int i = 0; i < n_down; ++i)
    branch.up.push_back(nn::ConvTranspose3d(store_, rng, name + ".up" + std::to_string(i),
                                            c, c, {3, 3, 3}, stride, {1, 1, 1}, true));
  const int sentence_len = cfg_.past_frames * kept_extent;
  branch.pos_embedding = store_.create_param(name + ".pos", {sentence_len, c});
  for (auto& v : branch.pos_embedding->value) v = rng.uniform(-0.02, 0.02);
  for (int i = 0; i < cfg_.attn_layers; ++i)
    branch.layers.push_back(nn::TransformerLayer(store_, rng,
                                                 name + ".attn" + std::to_string(i), c,
                                                 cfg_.attn_heads, cfg_.ff_width()));
  return branch;
}

NodePtr PredictorModel::make_input(const std::vector<RangeImage>& past) const {
  if (static_cast<int>(past.size()) != cfg_.past_frames)
    throw ContractViolation("predict: expected " + std::to_string(cfg_.past_frames) +
                            " past frames, got " + std::to_string(past.size()));
  const int h = cfg_.input_height, w = cfg_.input_width;
  std::vector<double> values;
  values.reserve(static_cast<size_t>(cfg_.past_frames) * h * w);
  for (const auto& frame : past) {
    if (frame.height() != h || frame.width() != w)
      throw ContractViolation("predict: frame dims do not match model config");
    for (double r : frame.ranges) values.push_back(r / cfg_.max_range);
  }
  return ag::make_const({1, cfg_.past_frames, h, w}, std::move(values));
}

PredictorModel::EncodeResult PredictorModel::encode(const NodePtr& x, bool training) const {
  if (x->shape != ag::Shape{1, cfg_.past_frames, cfg_.input_height, cfg_.input_width})
    throw ContractViolation("encode: input must be (1,P,H,W) = (1," +
                            std::to_string(cfg_.past_frames) + "," +
                            std::to_string(cfg_.input_height) + "," +
                            std::to_string(cfg_.input_width) + "), got " +
                            ag::shape_str(x->shape));
  EncodeResult result;
  NodePtr y = x;
  for (const auto& stage : encoder_) {
    y = stage.conv.forward(y);
    y = stage.bn.forward(y, training);
    y = ag::leaky_relu(y, cfg_.leaky_slope);
    y = stage.eca.forward(y);
    result.skips.push_back(y);
  }
  result.bottleneck = y;
  return result;
}

NodePtr PredictorModel::run_branch(const Branch& branch, const NodePtr& x) const {
  const int c = cfg_.bottleneck_channels();
  const int t = cfg_.past_frames;
  const int he = cfg_.bottleneck_height();
  const int we = cfg_.bottleneck_width();
  const int kept = branch.compress_height ? we : he;

  NodePtr y = x;
  for (const auto& conv : branch.down)
    y = ag::leaky_relu(conv.forward(y), cfg_.leaky_slope);

  // (C,T,1,kept) or (C,T,kept,1): T slices concatenate into one sentence.
  NodePtr tokens = ag::permute(ag::reshape(y, {c, t * kept}), {1, 0});
  tokens = ag::add(tokens, branch.pos_embedding);
  for (const auto& layer : branch.layers) tokens = layer.forward(tokens);
  const ag::Shape folded = branch.compress_height ? ag::Shape{c, t, 1, kept}
                                                  : ag::Shape{c, t, kept, 1};
  y = ag::reshape(ag::permute(tokens, {1, 0}), folded);

  // Mirror upsampling back to the bottleneck extent.
  for (size_t i = 0; i < branch.up.size(); ++i) {
    const int grown = 2 << static_cast<int>(i);
    const std::array<int, 3> dims = branch.compress_height
                                        ? std::array<int, 3>{t, grown, kept}
                                        : std::array<int, 3>{t, kept, grown};
    y = ag::leaky_relu(branch.up[i].forward(y, dims), cfg_.leaky_slope);
  }
  (void)he;
  return y;
}

ModelOutput PredictorModel::forward(const NodePtr& x, bool training) const {
  EncodeResult enc = encode(x, training);

  NodePtr fused;
  switch (cfg_.branch) {
    case BranchMode::both: {
      NodePtr bh = run_branch(branch_h_, enc.bottleneck);
      NodePtr bw = run_branch(branch_w_, enc.bottleneck);
      fused = ag::concat({bh, bw}, 0);
      break;
    }
    case BranchMode::h_only:
      fused = run_branch(branch_h_, enc.bottleneck);
      break;
    case BranchMode::w_only:
      fused = run_branch(branch_w_, enc.bottleneck);
      break;
  }
  fused = fuse_conv_.forward(fuse_eca_.forward(fused));

  NodePtr y = fused;
  const int s = cfg_.stages();
  for (int i = s - 1; i >= 0; --i) {
    const auto& stage = decoder_[s - 1 - i];
    y = ag::concat({y, enc.skips[i]}, 0);
    const std::array<int, 3> out_dims{cfg_.past_frames, cfg_.input_height >> i,
                                      cfg_.input_width >> i};
    y = stage.conv.forward(y, out_dims);
    y = stage.bn.forward(y, training);
    y = ag::leaky_relu(y, cfg_.leaky_slope);
    y = stage.eca.forward(y);
  }
  NodePtr raw = head_.forward(y);  // (2,P,H,W)

  if (has_temporal_) {
    const int h = cfg_.input_height, w = cfg_.input_width;
    NodePtr flat = ag::reshape(ag::permute(raw, {0, 2, 3, 1}), {2 * h * w, cfg_.past_frames});
    flat = temporal_.forward(flat);
    raw = ag::permute(ag::reshape(flat, {2, h, w, cfg_.future_frames}), {0, 3, 1, 2});
  }

  const ag::Shape head_shape{cfg_.future_frames, cfg_.input_height, cfg_.input_width};
  ModelOutput out;
  out.range_pred = ag::mul_scalar(
      ag::sigmoid(ag::reshape(ag::slice(raw, 0, 0, 1), head_shape)), cfg_.max_range);
  out.mask_prob = ag::sigmoid(ag::reshape(ag::slice(raw, 0, 1, 1), head_shape));
  return out;
}

ModelOutput PredictorModel::predict(const std::vector<RangeImage>& past,
                                    bool training) const {
  return forward(make_input(past), training);
}

// ---------------------------------------------------------------------------
// Complexity accounting: conv / linear / attention multiply-accumulates.
// ---------------------------------------------------------------------------

namespace {

struct CostLine {
  std::string name;
  int64_t macs;
};

}  // namespace

ModelComplexity PredictorModel::complexity() const {
  ModelComplexity result;
  result.params = store_.param_count();
  const int t = cfg_.past_frames;
  const int s = cfg_.stages();
  int64_t macs = 0;

  int cin = 1;
  for (int i = 0; i < s; ++i) {
    const int cout = cfg_.channels[i];
    const int64_t spatial =
        static_cast<int64_t>(t) * (cfg_.input_height >> (i + 1)) * (cfg_.input_width >> (i + 1));
    macs += static_cast<int64_t>(cout) * cin * 27 * spatial;
    macs += nn::eca_kernel_size(cout) * cout + cout * spatial;  // ECA conv + gate
    cin = cout;
  }

  const int c = cfg_.bottleneck_channels();
  const int he = cfg_.bottleneck_height();
  const int we = cfg_.bottleneck_width();
  auto branch_macs = [&](bool compress_height) {
    const int axis = compress_height ? he : we;
    const int kept = compress_height ? we : he;
    int64_t m = 0;
    int extent = axis;
    while (extent > 1) {
      extent /= 2;
      m += static_cast<int64_t>(c) * c * 27 * t * extent * kept;  // down conv
      m += static_cast<int64_t>(c) * c * 27 * t * extent * kept;  // mirrored up conv
    }
    const int64_t len = static_cast<int64_t>(t) * kept;
    const int64_t per_layer = 4 * len * c * c        // Q,K,V,O projections
                              + 2 * len * len * c    // scores + mix
                              + 2 * len * c * cfg_.ff_width();
    m += cfg_.attn_layers * per_layer;
    return m;
  };
  if (cfg_.branch != BranchMode::h_only) macs += branch_macs(true);
  if (cfg_.branch != BranchMode::w_only) macs += branch_macs(false);

  const int fuse_in = cfg_.branch == BranchMode::both ? 2 * c : c;
  macs += nn::eca_kernel_size(fuse_in) * fuse_in +
          static_cast<int64_t>(fuse_in) * t * he * we;
  macs += static_cast<int64_t>(fuse_in) * c * t * he * we;

  for (int i = s - 1; i >= 0; --i) {
    const int in_ch = 2 * cfg_.channels[i];
    const int out_ch = i == 0 ? cfg_.channels[0] : cfg_.channels[i - 1];
    const int64_t in_spatial =
        static_cast<int64_t>(t) * (cfg_.input_height >> (i + 1)) * (cfg_.input_width >> (i + 1));
    macs += static_cast<int64_t>(in_ch) * out_ch * 27 * in_spatial;
    const int64_t out_spatial =
        static_cast<int64_t>(t) * (cfg_.input_height >> i) * (cfg_.input_width >> i);
    macs += nn::eca_kernel_size(out_ch) * out_ch + out_ch * out_spatial;
  }

  const int64_t full = static_cast<int64_t>(t) * cfg_.input_height * cfg_.input_width;
  macs += static_cast<int64_t>(cfg_.channels[0]) * 2 * full;  // head
  if (has_temporal_)
    macs += static_cast<int64_t>(2) * cfg_.input_height * cfg_.input_width *
            cfg_.past_frames * cfg_.future_frames;

  result.macs = macs;
  return result;
}

std::vector<std::string> PredictorModel::complexity_report() const {
  std::vector<std::string> lines;
  for (const auto& [name, p] : store_.params()) {
    std::ostringstream os;
    os << name << "  " << ag::shape_str(p->shape) << "  " << p->numel();
    lines.push_back(os.str());
  }
  return lines;
}

}  // namespace rangecast
