#include "rangecast/nn.hpp"

#include <cmath>

namespace rangecast::nn {

namespace {

void fill_uniform(NodePtr& node, Rng& rng, double bound) {
  for (auto& v : node->value) v = rng.uniform(-bound, bound);
}

}  // namespace

double uniform_init_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

NodePtr ParamStore::create_param(const std::string& name, const Shape& shape) {
  for (const auto& [n, _] : params_)
    if (n == name) throw ContractViolation("duplicate parameter name: " + name);
  auto node = ag::make_leaf(shape, /*requires_grad=*/true);
  params_.emplace_back(name, node);
  return node;
}

std::shared_ptr<std::vector<double>> ParamStore::create_buffer(const std::string& name,
                                                               size_t size, double fill) {
  for (const auto& [n, _] : buffers_)
    if (n == name) throw ContractViolation("duplicate buffer name: " + name);
  auto buf = std::make_shared<std::vector<double>>(size, fill);
  buffers_.emplace_back(name, buf);
  return buf;
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (const auto& [_, p] : params_) n += p->numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p->zero_grad();
}

void ParamStore::set_requires_grad(bool on) {
  for (auto& [_, p] : params_) p->requires_grad = on;
}

std::vector<NamedTensor> ParamStore::to_tensors() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, p] : params_) {
    NamedTensor t;
    t.name = name;
    for (int d : p->shape) t.dims.push_back(static_cast<uint64_t>(d));
    t.data.reserve(p->value.size());
    for (double v : p->value) t.data.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  for (const auto& [name, buf] : buffers_) {
    NamedTensor t;
    t.name = "buf." + name;
    t.dims.push_back(buf->size());
    t.data.reserve(buf->size());
    for (double v : *buf) t.data.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

void ParamStore::load_tensors(const std::vector<NamedTensor>& tensors) {
  auto find = [&](const std::string& name) -> const NamedTensor* {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  };
  for (auto& [name, p] : params_) {
    const NamedTensor* t = find(name);
    if (!t) throw DataError("checkpoint missing parameter: " + name);
    if (static_cast<int64_t>(t->numel()) != p->numel())
      throw DataError("checkpoint shape mismatch for " + name);
    for (size_t i = 0; i < t->data.size(); ++i) p->value[i] = t->data[i];
  }
  for (auto& [name, buf] : buffers_) {
    const NamedTensor* t = find("buf." + name);
    if (!t) throw DataError("checkpoint missing buffer: " + name);
    if (t->data.size() != buf->size())
      throw DataError("checkpoint shape mismatch for buffer " + name);
    for (size_t i = 0; i < t->data.size(); ++i) (*buf)[i] = t->data[i];
  }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

Conv3d::Conv3d(ParamStore& store, Rng& rng, const std::string& name, int cin_,
               int cout_, std::array<int, 3> kernel_, std::array<int, 3> stride,
               std::array<int, 3> pad, bool circular_width)
    : kernel(kernel_), cin(cin_), cout(cout_) {
  spec.stride = stride;
  spec.pad = pad;
  spec.circular_width = circular_width;
  w = store.create_param(name + ".w", {cout, cin, kernel[0], kernel[1], kernel[2]});
  b = store.create_param(name + ".b", {cout});
  const double bound = uniform_init_bound(cin * kernel[0] * kernel[1] * kernel[2]);
  fill_uniform(w, rng, bound);
  fill_uniform(b, rng, bound);
}

ConvTranspose3d::ConvTranspose3d(ParamStore& store, Rng& rng, const std::string& name,
                                 int cin_, int cout_, std::array<int, 3> kernel_,
                                 std::array<int, 3> stride, std::array<int, 3> pad,
                                 bool circular_width)
    : kernel(kernel_), cin(cin_), cout(cout_) {
  spec.stride = stride;
  spec.pad = pad;
  spec.circular_width = circular_width;
  w = store.create_param(name + ".w", {cin, cout, kernel[0], kernel[1], kernel[2]});
  b = store.create_param(name + ".b", {cout});
  const double bound = uniform_init_bound(cin * kernel[0] * kernel[1] * kernel[2]);
  fill_uniform(w, rng, bound);
  fill_uniform(b, rng, bound);
}

Linear::Linear(ParamStore& store, Rng& rng, const std::string& name, int in_, int out_)
    : in(in_), out(out_) {
  w = store.create_param(name + ".w", {in, out});
  b = store.create_param(name + ".b", {out});
  const double bound = uniform_init_bound(in);
  fill_uniform(w, rng, bound);
  fill_uniform(b, rng, bound);
}

BatchNorm3d::BatchNorm3d(ParamStore& store, const std::string& name, int channels) {
  gamma = store.create_param(name + ".gamma", {channels});
  beta = store.create_param(name + ".beta", {channels});
  for (auto& v : gamma->value) v = 1.0;
  running_mean = store.create_buffer(name + ".running_mean", channels, 0.0);
  running_var = store.create_buffer(name + ".running_var", channels, 1.0);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int channels) {
  gamma = store.create_param(name + ".gamma", {channels});
  beta = store.create_param(name + ".beta", {channels});
  for (auto& v : gamma->value) v = 1.0;
}

int eca_kernel_size(int channels) {
  const double t = std::abs(std::log2(static_cast<double>(channels)) / 2.0 + 0.5);
  int k = static_cast<int>(t);
  if (k % 2 == 0) k += 1;
  k = std::max(1, std::min(k, channels));
  if (k % 2 == 0) k -= 1;  // channels may be even; keep the kernel odd
  return std::max(1, k);
}

Eca::Eca(ParamStore& store, Rng& rng, const std::string& name, int channels_)
    : channels(channels_), k(eca_kernel_size(channels_)) {
  w = store.create_param(name + ".w", {k});
  b = store.create_param(name + ".b", {1});
  const double bound = uniform_init_bound(k);
  fill_uniform(w, rng, bound);
}

NodePtr Eca::forward(const NodePtr& x) const {
  if (x->shape.empty() || x->shape[0] != channels)
    throw ContractViolation("Eca: channel mismatch, expected " + std::to_string(channels));
  NodePtr desc = ag::global_avg_pool(x);
  NodePtr gate = ag::sigmoid(ag::conv1d_circular(desc, w, b));
  ag::Shape gshape(x->shape.size(), 1);
  gshape[0] = channels;
  return ag::mul(x, ag::reshape(gate, gshape));
}

NodePtr multi_head_self_attention(const NodePtr& x, const Linear& wq, const Linear& wk,
                                  const Linear& wv, const Linear& wo, int heads) {
  if (x->shape.size() != 2) throw ContractViolation("attention: tokens must be (L,C)");
  const int len = x->shape[0];
  const int c = x->shape[1];
  if (c % heads != 0)
    throw ContractViolation("attention: heads must divide channel count");
  const int d = c / heads;

  auto split_heads = [&](const NodePtr& t) {  // (L,C) -> (h,L,d)
    return ag::permute(ag::reshape(t, {len, heads, d}), {1, 0, 2});
  };
  NodePtr q = split_heads(wq.forward(x));
  NodePtr k = split_heads(wk.forward(x));
  NodePtr v = split_heads(wv.forward(x));

  NodePtr scores = ag::mul_scalar(ag::bmm(q, ag::permute(k, {0, 2, 1})),
                                  1.0 / std::sqrt(static_cast<double>(d)));
  NodePtr attn = ag::softmax_last(scores);
  NodePtr ctx = ag::bmm(attn, v);                              // (h,L,d)
  NodePtr merged = ag::reshape(ag::permute(ctx, {1, 0, 2}), {len, c});
  return wo.forward(merged);
}

TransformerLayer::TransformerLayer(ParamStore& store, Rng& rng, const std::string& name,
                                   int channels_, int heads_, int ff_width_)
    : channels(channels_), heads(heads_), ff_width(ff_width_) {
  ln_attn = LayerNorm(store, name + ".ln_attn", channels);
  ln_ff = LayerNorm(store, name + ".ln_ff", channels);
  wq = Linear(store, rng, name + ".wq", channels, channels);
  wk = Linear(store, rng, name + ".wk", channels, channels);
  wv = Linear(store, rng, name + ".wv", channels, channels);
  wo = Linear(store, rng, name + ".wo", channels, channels);
  ff1 = Linear(store, rng, name + ".ff1", channels, ff_width);
  ff2 = Linear(store, rng, name + ".ff2", ff_width, channels);
}

NodePtr TransformerLayer::forward(const NodePtr& x) const {
  NodePtr h = ag::add(x, multi_head_self_attention(ln_attn.forward(x), wq, wk, wv, wo, heads));
  NodePtr ff = ff2.forward(ag::leaky_relu(ff1.forward(ln_ff.forward(h)), leaky_slope));
  return ag::add(h, ff);
}

}  // namespace rangecast::nn
