#include <string>
#include <vector>

#include "rangecast/ops.hpp"

namespace rangecast::ag {

namespace {

NodePtr make_conv_node(const char* name, const Shape& shape,
                       std::vector<NodePtr> parents) {
  auto n = make_leaf(shape);
  n->op = name;
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

// Input index per (kernel offset, output position); -1 marks zero padding.
std::vector<int> index_table(int out_extent, int k, int stride, int pad,
                             int in_extent, bool circular) {
  std::vector<int> table(static_cast<size_t>(k) * out_extent);
  for (int kk = 0; kk < k; ++kk)
    for (int o = 0; o < out_extent; ++o) {
      int i = o * stride - pad + kk;
      if (circular) i = ((i % in_extent) + in_extent) % in_extent;
      table[static_cast<size_t>(kk) * out_extent + o] =
          (i >= 0 && i < in_extent) ? i : -1;
    }
  return table;
}

}  // namespace

NodePtr conv3d(const NodePtr& x, const NodePtr& w, const NodePtr& b,
               const Conv3dSpec& spec) {
  if (x->shape.size() != 4)
    throw ContractViolation("conv3d: input must be (C,T,H,W), got " + shape_str(x->shape));
  if (w->shape.size() != 5)
    throw ContractViolation("conv3d: weight must be (Cout,Cin,kt,kh,kw)");
  const int cin = x->shape[0], t = x->shape[1], h = x->shape[2], wd = x->shape[3];
  const int cout = w->shape[0], kt = w->shape[2], kh = w->shape[3], kw = w->shape[4];
  if (w->shape[1] != cin)
    throw ContractViolation("conv3d: weight expects Cin=" + std::to_string(w->shape[1]) +
                            " but input has C=" + std::to_string(cin));
  if (b->numel() != cout) throw ContractViolation("conv3d: bias size mismatch");
  const auto [st, sh, sw] = spec.stride;
  const auto [pt, ph, pw] = spec.pad;
  const int to = (t + 2 * pt - kt) / st + 1;
  const int ho = (h + 2 * ph - kh) / sh + 1;
  const int wo = (wd + 2 * pw - kw) / sw + 1;
  if (to < 1 || ho < 1 || wo < 1)
    throw ContractViolation("conv3d: output would be empty for input " + shape_str(x->shape));

  const auto tab_t = index_table(to, kt, st, pt, t, false);
  const auto tab_h = index_table(ho, kh, sh, ph, h, false);
  const auto tab_w = index_table(wo, kw, sw, pw, wd, spec.circular_width);

  auto out = make_conv_node("conv3d", {cout, to, ho, wo}, {x, w, b});
  const int64_t out_spatial = static_cast<int64_t>(to) * ho * wo;
  for (int co = 0; co < cout; ++co) {
    const double bias = b->value[co];
    double* ov = out->value.data() + co * out_spatial;
    for (int64_t i = 0; i < out_spatial; ++i) ov[i] = bias;
  }
  for (int co = 0; co < cout; ++co) {
    double* oc = out->value.data() + co * out_spatial;
    for (int ci = 0; ci < cin; ++ci) {
      const double* xc = x->value.data() + static_cast<int64_t>(ci) * t * h * wd;
      const double* wc = w->value.data() +
                         (static_cast<int64_t>(co) * cin + ci) * kt * kh * kw;
      for (int a = 0; a < kt; ++a)
        for (int bb = 0; bb < kh; ++bb)
          for (int c = 0; c < kw; ++c) {
            const double wv = wc[(a * kh + bb) * kw + c];
            const int* tw = tab_w.data() + static_cast<size_t>(c) * wo;
            for (int ot = 0; ot < to; ++ot) {
              const int it = tab_t[static_cast<size_t>(a) * to + ot];
              if (it < 0) continue;
              for (int oh = 0; oh < ho; ++oh) {
                const int ih = tab_h[static_cast<size_t>(bb) * ho + oh];
                if (ih < 0) continue;
                const double* xrow = xc + (static_cast<int64_t>(it) * h + ih) * wd;
                double* orow = oc + (static_cast<int64_t>(ot) * ho + oh) * wo;
                for (int ow = 0; ow < wo; ++ow) {
                  const int iw = tw[ow];
                  if (iw >= 0) orow[ow] += wv * xrow[iw];
                }
              }
            }
          }
    }
  }

  if (out->requires_grad)
    out->backprop = [x, w, b, tab_t, tab_h, tab_w, cin, cout, t, h, wd, to, ho, wo,
                     kt, kh, kw, out_spatial](Node& self) {
      if (b->requires_grad)
        for (int co = 0; co < cout; ++co) {
          double acc = 0.0;
          const double* g = self.grad.data() + co * out_spatial;
          for (int64_t i = 0; i < out_spatial; ++i) acc += g[i];
          b->grad[co] += acc;
        }
      for (int co = 0; co < cout; ++co) {
        const double* gc = self.grad.data() + co * out_spatial;
        for (int ci = 0; ci < cin; ++ci) {
          const double* xc = x->value.data() + static_cast<int64_t>(ci) * t * h * wd;
          double* gxc = x->requires_grad
                            ? x->grad.data() + static_cast<int64_t>(ci) * t * h * wd
                            : nullptr;
          const int64_t wbase = (static_cast<int64_t>(co) * cin + ci) * kt * kh * kw;
          for (int a = 0; a < kt; ++a)
            for (int bb = 0; bb < kh; ++bb)
              for (int c = 0; c < kw; ++c) {
                const double wv = w->value[wbase + (a * kh + bb) * kw + c];
                double wacc = 0.0;
                const int* tw = tab_w.data() + static_cast<size_t>(c) * wo;
                for (int ot = 0; ot < to; ++ot) {
                  const int it = tab_t[static_cast<size_t>(a) * to + ot];
                  if (it < 0) continue;
                  for (int oh = 0; oh < ho; ++oh) {
                    const int ih = tab_h[static_cast<size_t>(bb) * ho + oh];
                    if (ih < 0) continue;
                    const double* xrow = xc + (static_cast<int64_t>(it) * h + ih) * wd;
                    const double* grow = gc + (static_cast<int64_t>(ot) * ho + oh) * wo;
                    double* gxrow = gxc ? gxc + (static_cast<int64_t>(it) * h + ih) * wd
                                        : nullptr;
                    for (int ow = 0; ow < wo; ++ow) {
                      const int iw = tw[ow];
                      if (iw < 0) continue;
                      wacc += grow[ow] * xrow[iw];
                      if (gxrow) gxrow[iw] += wv * grow[ow];
                    }
                  }
                }
                if (w->requires_grad) w->grad[wbase + (a * kh + bb) * kw + c] += wacc;
              }
        }
      }
    };
  return out;
}

NodePtr conv3d_transpose(const NodePtr& x, const NodePtr& w, const NodePtr& b,
                         const Conv3dSpec& spec, const std::array<int, 3>& out_dims) {
  if (x->shape.size() != 4)
    throw ContractViolation("conv3d_transpose: input must be (C,T,H,W)");
  if (w->shape.size() != 5)
    throw ContractViolation("conv3d_transpose: weight must be (Cin,Cout,kt,kh,kw)");
  const int cin = x->shape[0], t = x->shape[1], h = x->shape[2], wd = x->shape[3];
  const int cout = w->shape[1], kt = w->shape[2], kh = w->shape[3], kw = w->shape[4];
  if (w->shape[0] != cin)
    throw ContractViolation("conv3d_transpose: weight expects Cin=" +
                            std::to_string(w->shape[0]) + " but input has C=" +
                            std::to_string(cin));
  if (b->numel() != cout) throw ContractViolation("conv3d_transpose: bias size mismatch");
  const auto [st, sh, sw] = spec.stride;
  const auto [pt, ph, pw] = spec.pad;
  const auto [to, ho, wo] = out_dims;
  if (to < 1 || ho < 1 || wo < 1)
    throw ContractViolation("conv3d_transpose: bad output dims");

  // Target index per (kernel offset, input position); -1 marks dropped.
  auto target_table = [](int in_extent, int k, int stride, int pad, int out_extent,
                         bool circular) {
    std::vector<int> table(static_cast<size_t>(k) * in_extent);
    for (int kk = 0; kk < k; ++kk)
      for (int i = 0; i < in_extent; ++i) {
        int o = i * stride - pad + kk;
        if (circular) o = ((o % out_extent) + out_extent) % out_extent;
        table[static_cast<size_t>(kk) * in_extent + i] =
            (o >= 0 && o < out_extent) ? o : -1;
      }
    return table;
  };
  const auto tab_t = target_table(t, kt, st, pt, to, false);
  const auto tab_h = target_table(h, kh, sh, ph, ho, false);
  const auto tab_w = target_table(wd, kw, sw, pw, wo, spec.circular_width);

  auto out = make_conv_node("conv3d_transpose", {cout, to, ho, wo}, {x, w, b});
  const int64_t out_spatial = static_cast<int64_t>(to) * ho * wo;
  for (int co = 0; co < cout; ++co) {
    const double bias = b->value[co];
    double* ov = out->value.data() + co * out_spatial;
    for (int64_t i = 0; i < out_spatial; ++i) ov[i] = bias;
  }
  for (int ci = 0; ci < cin; ++ci) {
    const double* xc = x->value.data() + static_cast<int64_t>(ci) * t * h * wd;
    for (int co = 0; co < cout; ++co) {
      double* oc = out->value.data() + co * out_spatial;
      const int64_t wbase = (static_cast<int64_t>(ci) * cout + co) * kt * kh * kw;
      for (int a = 0; a < kt; ++a)
        for (int bb = 0; bb < kh; ++bb)
          for (int c = 0; c < kw; ++c) {
            const double wv = w->value[wbase + (a * kh + bb) * kw + c];
            const int* tw = tab_w.data() + static_cast<size_t>(c) * wd;
            for (int it = 0; it < t; ++it) {
              const int ot = tab_t[static_cast<size_t>(a) * t + it];
              if (ot < 0) continue;
              for (int ih = 0; ih < h; ++ih) {
                const int oh = tab_h[static_cast<size_t>(bb) * h + ih];
                if (oh < 0) continue;
                const double* xrow = xc + (static_cast<int64_t>(it) * h + ih) * wd;
                double* orow = oc + (static_cast<int64_t>(ot) * ho + oh) * wo;
                for (int iw = 0; iw < wd; ++iw) {
                  const int ow = tw[iw];
                  if (ow >= 0) orow[ow] += wv * xrow[iw];
                }
              }
            }
          }
    }
  }

  if (out->requires_grad)
    out->backprop = [x, w, b, tab_t, tab_h, tab_w, cin, cout, t, h, wd, to, ho, wo,
                     kt, kh, kw, out_spatial](Node& self) {
      if (b->requires_grad)
        for (int co = 0; co < cout; ++co) {
          double acc = 0.0;
          const double* g = self.grad.data() + co * out_spatial;
          for (int64_t i = 0; i < out_spatial; ++i) acc += g[i];
          b->grad[co] += acc;
        }
      for (int ci = 0; ci < cin; ++ci) {
        const double* xc = x->value.data() + static_cast<int64_t>(ci) * t * h * wd;
        double* gxc = x->requires_grad
                          ? x->grad.data() + static_cast<int64_t>(ci) * t * h * wd
                          : nullptr;
        for (int co = 0; co < cout; ++co) {
          const double* gc = self.grad.data() + co * out_spatial;
          const int64_t wbase = (static_cast<int64_t>(ci) * cout + co) * kt * kh * kw;
          for (int a = 0; a < kt; ++a)
            for (int bb = 0; bb < kh; ++bb)
              for (int c = 0; c < kw; ++c) {
                const double wv = w->value[wbase + (a * kh + bb) * kw + c];
                double wacc = 0.0;
                const int* tw = tab_w.data() + static_cast<size_t>(c) * wd;
                for (int it = 0; it < t; ++it) {
                  const int ot = tab_t[static_cast<size_t>(a) * t + it];
                  if (ot < 0) continue;
                  for (int ih = 0; ih < h; ++ih) {
                    const int oh = tab_h[static_cast<size_t>(bb) * h + ih];
                    if (oh < 0) continue;
                    const double* xrow = xc + (static_cast<int64_t>(it) * h + ih) * wd;
                    const double* grow = gc + (static_cast<int64_t>(ot) * ho + oh) * wo;
                    double* gxrow = gxc ? gxc + (static_cast<int64_t>(it) * h + ih) * wd
                                        : nullptr;
                    for (int iw = 0; iw < wd; ++iw) {
                      const int ow = tw[iw];
                      if (ow < 0) continue;
                      wacc += grow[ow] * xrow[iw];
                      if (gxrow) gxrow[iw] += wv * grow[ow];
                    }
                  }
                }
                if (w->requires_grad) w->grad[wbase + (a * kh + bb) * kw + c] += wacc;
              }
        }
      }
    };
  return out;
}

}  // namespace rangecast::ag
