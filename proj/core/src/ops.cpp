#include "rangecast/ops.hpp"

#include <algorithm>
#include <cmath>

#include "rangecast/kdtree.hpp"

namespace rangecast::ag {

namespace {

std::vector<int64_t> strides_of(const Shape& shape) {
  std::vector<int64_t> s(shape.size());
  int64_t acc = 1;
  for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
    s[d] = acc;
    acc *= shape[d];
  }
  return s;
}

NodePtr make_op(const char* name, const Shape& shape, std::vector<NodePtr> parents) {
  auto n = make_leaf(shape);
  n->op = name;
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

bool wants_grad(const Node& n, size_t parent) {
  return n.parents[parent]->requires_grad;
}

// Trailing (numpy-style) broadcast plan: per output dim, the flat-index step
// each input takes when that dim increments (0 on broadcast dims).
struct BPlan {
  Shape out;
  std::vector<int64_t> sa, sb;
};

BPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  const int nd = static_cast<int>(std::max(a.size(), b.size()));
  BPlan p;
  p.out.resize(nd);
  p.sa.resize(nd);
  p.sb.resize(nd);
  auto sa_nat = strides_of(a);
  auto sb_nat = strides_of(b);
  for (int d = 0; d < nd; ++d) {
    const int da = d - (nd - static_cast<int>(a.size()));
    const int db = d - (nd - static_cast<int>(b.size()));
    const int ea = da >= 0 ? a[da] : 1;
    const int eb = db >= 0 ? b[db] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw ContractViolation(std::string(op) + ": shapes " + shape_str(a) + " and " +
                              shape_str(b) + " do not broadcast");
    p.out[d] = std::max(ea, eb);
    p.sa[d] = (da >= 0 && ea != 1) ? sa_nat[da] : 0;
    p.sb[d] = (db >= 0 && eb != 1) ? sb_nat[db] : 0;
  }
  return p;
}

template <class F>
void for_each_broadcast(const BPlan& p, F&& f) {
  const int nd = static_cast<int>(p.out.size());
  std::vector<int> idx(nd, 0);
  const int64_t n = shape_numel(p.out);
  int64_t ia = 0, ib = 0;
  for (int64_t io = 0; io < n; ++io) {
    f(ia, ib, io);
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.out[d]) break;
      idx[d] = 0;
      ia -= p.sa[d] * p.out[d];
      ib -= p.sb[d] * p.out[d];
    }
  }
}

void check_same_numel(const char* op, const NodePtr& x, size_t n) {
  if (x->value.size() != n)
    throw ContractViolation(std::string(op) + ": expected " + std::to_string(n) +
                            " elements, got " + shape_str(x->shape));
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape moves
// ---------------------------------------------------------------------------

NodePtr reshape(const NodePtr& x, const Shape& shape) {
  if (shape_numel(shape) != x->numel())
    throw ContractViolation("reshape: element count mismatch " + shape_str(x->shape) +
                            " -> " + shape_str(shape));
  auto out = make_op("reshape", shape, {x});
  out->value = x->value;
  if (out->requires_grad)
    out->backprop = [x](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
    };
  return out;
}

NodePtr permute(const NodePtr& x, const std::vector<int>& perm) {
  const int nd = static_cast<int>(x->shape.size());
  if (static_cast<int>(perm.size()) != nd)
    throw ContractViolation("permute: rank mismatch");
  Shape out_shape(nd);
  for (int d = 0; d < nd; ++d) out_shape[d] = x->shape[perm[d]];
  const auto in_strides = strides_of(x->shape);
  std::vector<int64_t> map(nd);  // step in x's flat index per out dim
  for (int d = 0; d < nd; ++d) map[d] = in_strides[perm[d]];

  auto out = make_op("permute", out_shape, {x});
  const int64_t n = out->numel();
  {
    std::vector<int> idx(nd, 0);
    int64_t ii = 0;
    for (int64_t io = 0; io < n; ++io) {
      out->value[io] = x->value[ii];
      for (int d = nd - 1; d >= 0; --d) {
        ++idx[d];
        ii += map[d];
        if (idx[d] < out_shape[d]) break;
        idx[d] = 0;
        ii -= map[d] * out_shape[d];
      }
    }
  }
  if (out->requires_grad)
    out->backprop = [x, map, out_shape, nd, n](Node& self) {
      std::vector<int> idx(nd, 0);
      int64_t ii = 0;
      for (int64_t io = 0; io < n; ++io) {
        x->grad[ii] += self.grad[io];
        for (int d = nd - 1; d >= 0; --d) {
          ++idx[d];
          ii += map[d];
          if (idx[d] < out_shape[d]) break;
          idx[d] = 0;
          ii -= map[d] * out_shape[d];
        }
      }
    };
  return out;
}

NodePtr concat(const std::vector<NodePtr>& xs, int axis) {
  if (xs.empty()) throw ContractViolation("concat: empty input list");
  const Shape& first = xs[0]->shape;
  const int nd = static_cast<int>(first.size());
  if (axis < 0 || axis >= nd) throw ContractViolation("concat: bad axis");
  int total = 0;
  for (const auto& x : xs) {
    if (static_cast<int>(x->shape.size()) != nd)
      throw ContractViolation("concat: rank mismatch");
    for (int d = 0; d < nd; ++d)
      if (d != axis && x->shape[d] != first[d])
        throw ContractViolation("concat: shape mismatch " + shape_str(x->shape) +
                                " vs " + shape_str(first));
    total += x->shape[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first[d];
  for (int d = axis + 1; d < nd; ++d) inner *= first[d];

  auto out = make_op("concat", out_shape, xs);
  int64_t offset = 0;  // in units of inner, within one outer block
  for (const auto& x : xs) {
    const int64_t block = x->shape[axis] * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(x->value.data() + o * block, block,
                  out->value.data() + o * total * inner + offset);
    offset += block;
  }
  if (out->requires_grad)
    out->backprop = [xs, outer, inner, total](Node& self) {
      int64_t offset = 0;
      for (const auto& x : xs) {
        const int64_t block = static_cast<int64_t>(x->value.size()) / outer;
        if (x->requires_grad)
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < block; ++i)
              x->grad[o * block + i] += self.grad[o * total * inner + offset + i];
        offset += block;
      }
    };
  return out;
}

NodePtr slice(const NodePtr& x, int axis, int start, int len) {
  const int nd = static_cast<int>(x->shape.size());
  if (axis < 0 || axis >= nd) throw ContractViolation("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > x->shape[axis])
    throw ContractViolation("slice: range out of bounds");
  Shape out_shape = x->shape;
  out_shape[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x->shape[d];
  for (int d = axis + 1; d < nd; ++d) inner *= x->shape[d];
  const int64_t in_block = x->shape[axis] * inner;
  const int64_t out_block = len * inner;

  auto out = make_op("slice", out_shape, {x});
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(x->value.data() + o * in_block + start * inner, out_block,
                out->value.data() + o * out_block);
  if (out->requires_grad)
    out->backprop = [x, outer, inner, in_block, out_block, start](Node& self) {
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < out_block; ++i)
          x->grad[o * in_block + start * inner + i] += self.grad[o * out_block + i];
    };
  return out;
}

NodePtr gather_flat(const NodePtr& x, std::vector<int64_t> indices) {
  for (int64_t idx : indices)
    if (idx < 0 || idx >= x->numel())
      throw ContractViolation("gather_flat: index out of range");
  auto out = make_op("gather_flat", {static_cast<int>(indices.size())}, {x});
  for (size_t i = 0; i < indices.size(); ++i) out->value[i] = x->value[indices[i]];
  if (out->requires_grad)
    out->backprop = [x, indices = std::move(indices)](Node& self) {
      for (size_t i = 0; i < indices.size(); ++i) x->grad[indices[i]] += self.grad[i];
    };
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

NodePtr add(const NodePtr& a, const NodePtr& b) {
  const BPlan p = plan_broadcast("add", a->shape, b->shape);
  auto out = make_op("add", p.out, {a, b});
  for_each_broadcast(p, [&](int64_t ia, int64_t ib, int64_t io) {
    out->value[io] = a->value[ia] + b->value[ib];
  });
  if (out->requires_grad)
    out->backprop = [a, b, p](Node& self) {
      const bool ga = a->requires_grad, gb = b->requires_grad;
      for_each_broadcast(p, [&](int64_t ia, int64_t ib, int64_t io) {
        if (ga) a->grad[ia] += self.grad[io];
        if (gb) b->grad[ib] += self.grad[io];
      });
    };
  return out;
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  const BPlan p = plan_broadcast("sub", a->shape, b->shape);
  auto out = make_op("sub", p.out, {a, b});
  for_each_broadcast(p, [&](int64_t ia, int64_t ib, int64_t io) {
    out->value[io] = a->value[ia] - b->value[ib];
  });
  if (out->requires_grad)
    out->backprop = [a, b, p](Node& self) {
      const bool ga = a->requires_grad, gb = b->requires_grad;
      for_each_broadcast(p, [&](int64_t ia, int64_t ib, int64_t io) {
        if (ga) a->grad[ia] += self.grad[io];
        if (gb) b->grad[ib] -= self.grad[io];
      });
    };
  return out;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  const BPlan p = plan_broadcast("mul", a->shape, b->shape);
  auto out = make_op("mul", p.out, {a, b});
  for_each_broadcast(p, [&](int64_t ia, int64_t ib, int64_t io) {
    out->value[io] = a->value[ia] * b->value[ib];
  });
  if (out->requires_grad)
    out->backprop = [a, b, p](Node& self) {
      const bool ga = a->requires_grad, gb = b->requires_grad;
      for_each_broadcast(p, [&](int64_t ia, int64_t ib, int64_t io) {
        if (ga) a->grad[ia] += b->value[ib] * self.grad[io];
        if (gb) b->grad[ib] += a->value[ia] * self.grad[io];
      });
    };
  return out;
}

NodePtr add_scalar(const NodePtr& x, double s) {
  auto out = make_op("add_scalar", x->shape, {x});
  for (int64_t i = 0; i < x->numel(); ++i) out->value[i] = x->value[i] + s;
  if (out->requires_grad)
    out->backprop = [x](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
    };
  return out;
}

NodePtr mul_scalar(const NodePtr& x, double s) {
  auto out = make_op("mul_scalar", x->shape, {x});
  for (int64_t i = 0; i < x->numel(); ++i) out->value[i] = x->value[i] * s;
  if (out->requires_grad)
    out->backprop = [x, s](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += s * self.grad[i];
    };
  return out;
}

NodePtr sigmoid(const NodePtr& x) {
  auto out = make_op("sigmoid", x->shape, {x});
  for (int64_t i = 0; i < x->numel(); ++i)
    out->value[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  if (out->requires_grad)
    out->backprop = [x](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double s = self.value[i];
        x->grad[i] += s * (1.0 - s) * self.grad[i];
      }
    };
  return out;
}

NodePtr leaky_relu(const NodePtr& x, double slope) {
  auto out = make_op("leaky_relu", x->shape, {x});
  for (int64_t i = 0; i < x->numel(); ++i) {
    const double v = x->value[i];
    out->value[i] = v >= 0.0 ? v : slope * v;
  }
  if (out->requires_grad)
    out->backprop = [x, slope](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        x->grad[i] += (x->value[i] >= 0.0 ? 1.0 : slope) * self.grad[i];
    };
  return out;
}

NodePtr clamp(const NodePtr& x, double lo, double hi) {
  auto out = make_op("clamp", x->shape, {x});
  for (int64_t i = 0; i < x->numel(); ++i)
    out->value[i] = std::min(hi, std::max(lo, x->value[i]));
  if (out->requires_grad)
    out->backprop = [x, lo, hi](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        if (x->value[i] >= lo && x->value[i] <= hi) x->grad[i] += self.grad[i];
    };
  return out;
}

NodePtr log_op(const NodePtr& x) {
  auto out = make_op("log", x->shape, {x});
  for (int64_t i = 0; i < x->numel(); ++i) out->value[i] = std::log(x->value[i]);
  if (out->requires_grad)
    out->backprop = [x](Node& self) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        x->grad[i] += self.grad[i] / x->value[i];
    };
  return out;
}

// ---------------------------------------------------------------------------
// Reductions / contractions
// ---------------------------------------------------------------------------

NodePtr sum_all(const NodePtr& x) {
  auto out = make_op("sum_all", {1}, {x});
  double acc = 0.0;
  for (double v : x->value) acc += v;
  out->value[0] = acc;
  if (out->requires_grad)
    out->backprop = [x](Node& self) {
      const double g = self.grad[0];
      for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    };
  return out;
}

NodePtr mean_all(const NodePtr& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x->numel()));
}

NodePtr global_avg_pool(const NodePtr& x) {
  if (x->shape.size() < 2) throw ContractViolation("global_avg_pool: rank must be >= 2");
  const int c_dim = x->shape[0];
  const int64_t n = x->numel() / c_dim;
  auto out = make_op("global_avg_pool", {c_dim}, {x});
  // Sum in sorted order so the result depends only on the multiset of
  // values; circular shifts of the input then pool bit-identically.
  std::vector<double> sorted(n);
  for (int c = 0; c < c_dim; ++c) {
    std::copy(x->value.begin() + c * n, x->value.begin() + (c + 1) * n, sorted.begin());
    std::sort(sorted.begin(), sorted.end());
    double acc = 0.0;
    for (double v : sorted) acc += v;
    out->value[c] = acc / static_cast<double>(n);
  }
  if (out->requires_grad)
    out->backprop = [x, c_dim, n](Node& self) {
      for (int c = 0; c < c_dim; ++c) {
        const double g = self.grad[c] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) x->grad[c * n + i] += g;
      }
    };
  return out;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ContractViolation("matmul: incompatible shapes " + shape_str(a->shape) +
                            " x " + shape_str(b->shape));
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = make_op("matmul", {m, n}, {a, b});
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const double av = a->value[i * k + kk];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out->value[i * n + j] += av * b->value[kk * n + j];
    }
  if (out->requires_grad)
    out->backprop = [a, b, m, k, n](Node& self) {
      if (a->requires_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = self.grad[i * n + j];
            for (int kk = 0; kk < k; ++kk) a->grad[i * k + kk] += g * b->value[kk * n + j];
          }
      if (b->requires_grad)
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double av = a->value[i * k + kk];
            for (int j = 0; j < n; ++j) b->grad[kk * n + j] += av * self.grad[i * n + j];
          }
    };
  return out;
}

NodePtr bmm(const NodePtr& a, const NodePtr& b) {
  if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0] ||
      a->shape[2] != b->shape[1])
    throw ContractViolation("bmm: incompatible shapes " + shape_str(a->shape) + " x " +
                            shape_str(b->shape));
  const int bt = a->shape[0], m = a->shape[1], k = a->shape[2], n = b->shape[2];
  auto out = make_op("bmm", {bt, m, n}, {a, b});
  for (int t = 0; t < bt; ++t) {
    const double* av = a->value.data() + static_cast<int64_t>(t) * m * k;
    const double* bv = b->value.data() + static_cast<int64_t>(t) * k * n;
    double* ov = out->value.data() + static_cast<int64_t>(t) * m * n;
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        const double x = av[i * k + kk];
        if (x == 0.0) continue;
        for (int j = 0; j < n; ++j) ov[i * n + j] += x * bv[kk * n + j];
      }
  }
  if (out->requires_grad)
    out->backprop = [a, b, bt, m, k, n](Node& self) {
      for (int t = 0; t < bt; ++t) {
        const double* av = a->value.data() + static_cast<int64_t>(t) * m * k;
        const double* bv = b->value.data() + static_cast<int64_t>(t) * k * n;
        const double* g = self.grad.data() + static_cast<int64_t>(t) * m * n;
        if (a->requires_grad) {
          double* ga = a->grad.data() + static_cast<int64_t>(t) * m * k;
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gv = g[i * n + j];
              for (int kk = 0; kk < k; ++kk) ga[i * k + kk] += gv * bv[kk * n + j];
            }
        }
        if (b->requires_grad) {
          double* gb = b->grad.data() + static_cast<int64_t>(t) * k * n;
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              const double x = av[i * k + kk];
              for (int j = 0; j < n; ++j) gb[kk * n + j] += x * g[i * n + j];
            }
        }
      }
    };
  return out;
}

NodePtr softmax_axis(const NodePtr& x, int axis) {
  const int nd = static_cast<int>(x->shape.size());
  if (axis < 0 || axis >= nd) throw ContractViolation("softmax: bad axis");
  const int m = x->shape[axis];
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x->shape[d];
  for (int d = axis + 1; d < nd; ++d) inner *= x->shape[d];

  auto out = make_op("softmax", x->shape, {x});
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * m * inner + in;
      double mx = x->value[base];
      for (int j = 1; j < m; ++j) mx = std::max(mx, x->value[base + j * inner]);
      double sum = 0.0;
      for (int j = 0; j < m; ++j) {
        const double e = std::exp(x->value[base + j * inner] - mx);
        out->value[base + j * inner] = e;
        sum += e;
      }
      for (int j = 0; j < m; ++j) out->value[base + j * inner] /= sum;
    }
  if (out->requires_grad)
    out->backprop = [x, m, outer, inner](Node& self) {
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * m * inner + in;
          double dot = 0.0;
          for (int j = 0; j < m; ++j)
            dot += self.grad[base + j * inner] * self.value[base + j * inner];
          for (int j = 0; j < m; ++j) {
            const int64_t idx = base + j * inner;
            x->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
          }
        }
    };
  return out;
}

NodePtr softmax_last(const NodePtr& x) {
  return softmax_axis(x, static_cast<int>(x->shape.size()) - 1);
}

// ---------------------------------------------------------------------------
// 1D circular conv / norms
// ---------------------------------------------------------------------------

NodePtr conv1d_circular(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  if (x->shape.size() != 1 || w->shape.size() != 1 || b->numel() != 1)
    throw ContractViolation("conv1d_circular: x and w must be vectors, b scalar");
  const int c = x->shape[0];
  const int k = w->shape[0];
  if (k % 2 == 0 || k > c)
    throw ContractViolation("conv1d_circular: kernel must be odd and <= length");
  const int half = k / 2;
  auto at = [c](int i) { return ((i % c) + c) % c; };

  auto out = make_op("conv1d_circular", {c}, {x, w, b});
  for (int i = 0; i < c; ++i) {
    double acc = b->value[0];
    for (int j = 0; j < k; ++j) acc += w->value[j] * x->value[at(i + j - half)];
    out->value[i] = acc;
  }
  if (out->requires_grad)
    out->backprop = [x, w, b, c, k, half, at](Node& self) {
      for (int i = 0; i < c; ++i) {
        const double g = self.grad[i];
        if (b->requires_grad) b->grad[0] += g;
        for (int j = 0; j < k; ++j) {
          const int src = at(i + j - half);
          if (w->requires_grad) w->grad[j] += g * x->value[src];
          if (x->requires_grad) x->grad[src] += g * w->value[j];
        }
      }
    };
  return out;
}

NodePtr batch_norm3d(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                     std::vector<double>& running_mean, std::vector<double>& running_var,
                     bool training, double momentum, double eps) {
  if (x->shape.size() < 2) throw ContractViolation("batch_norm3d: rank must be >= 2");
  const int c_dim = x->shape[0];
  if (gamma->numel() != c_dim || beta->numel() != c_dim ||
      static_cast<int>(running_mean.size()) != c_dim ||
      static_cast<int>(running_var.size()) != c_dim)
    throw ContractViolation("batch_norm3d: affine/stat size mismatch for C=" +
                            std::to_string(c_dim));
  const int64_t n = x->numel() / c_dim;

  std::vector<double> mean(c_dim), var(c_dim);
  if (training) {
    for (int c = 0; c < c_dim; ++c) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += x->value[c * n + i];
      mean[c] = acc / static_cast<double>(n);
      double vacc = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double d = x->value[c * n + i] - mean[c];
        vacc += d * d;
      }
      var[c] = vacc / static_cast<double>(n);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c];
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  auto out = make_op("batch_norm3d", x->shape, {x, gamma, beta});
  std::vector<double> inv_std(c_dim);
  for (int c = 0; c < c_dim; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (int c = 0; c < c_dim; ++c) {
    const double g = gamma->value[c], bv = beta->value[c], mu = mean[c], is = inv_std[c];
    for (int64_t i = 0; i < n; ++i)
      out->value[c * n + i] = g * (x->value[c * n + i] - mu) * is + bv;
  }
  if (out->requires_grad)
    out->backprop = [x, gamma, beta, mean, inv_std, training, c_dim, n](Node& self) {
      for (int c = 0; c < c_dim; ++c) {
        const double mu = mean[c], is = inv_std[c], gm = gamma->value[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int64_t i = 0; i < n; ++i) {
          const double g = self.grad[c * n + i];
          sum_g += g;
          sum_gx += g * (x->value[c * n + i] - mu) * is;
        }
        if (gamma->requires_grad) gamma->grad[c] += sum_gx;
        if (beta->requires_grad) beta->grad[c] += sum_g;
        if (x->requires_grad) {
          if (training) {
            const double mg = sum_g / static_cast<double>(n);
            const double mgx = sum_gx / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i) {
              const double xhat = (x->value[c * n + i] - mu) * is;
              x->grad[c * n + i] += gm * is * (self.grad[c * n + i] - mg - xhat * mgx);
            }
          } else {
            for (int64_t i = 0; i < n; ++i)
              x->grad[c * n + i] += gm * is * self.grad[c * n + i];
          }
        }
      }
    };
  return out;
}

NodePtr layer_norm_last(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                        double eps) {
  const int nd = static_cast<int>(x->shape.size());
  const int c_dim = x->shape[nd - 1];
  if (gamma->numel() != c_dim || beta->numel() != c_dim)
    throw ContractViolation("layer_norm: affine size mismatch");
  const int64_t rows = x->numel() / c_dim;

  auto out = make_op("layer_norm", x->shape, {x, gamma, beta});
  std::vector<double> mean(rows), inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xv = x->value.data() + r * c_dim;
    double mu = 0.0;
    for (int c = 0; c < c_dim; ++c) mu += xv[c];
    mu /= c_dim;
    double v = 0.0;
    for (int c = 0; c < c_dim; ++c) v += (xv[c] - mu) * (xv[c] - mu);
    v /= c_dim;
    mean[r] = mu;
    inv_std[r] = 1.0 / std::sqrt(v + eps);
    for (int c = 0; c < c_dim; ++c)
      out->value[r * c_dim + c] =
          gamma->value[c] * (xv[c] - mu) * inv_std[r] + beta->value[c];
  }
  if (out->requires_grad)
    out->backprop = [x, gamma, beta, mean, inv_std, rows, c_dim](Node& self) {
      for (int64_t r = 0; r < rows; ++r) {
        const double* xv = x->value.data() + r * c_dim;
        const double* g = self.grad.data() + r * c_dim;
        const double mu = mean[r], is = inv_std[r];
        double sum_gg = 0.0, sum_ggx = 0.0;  // sums of gamma-scaled grads
        for (int c = 0; c < c_dim; ++c) {
          const double gg = g[c] * gamma->value[c];
          const double xhat = (xv[c] - mu) * is;
          sum_gg += gg;
          sum_ggx += gg * xhat;
          if (gamma->requires_grad) gamma->grad[c] += g[c] * xhat;
          if (beta->requires_grad) beta->grad[c] += g[c];
        }
        if (x->requires_grad) {
          const double mg = sum_gg / c_dim;
          const double mgx = sum_ggx / c_dim;
          for (int c = 0; c < c_dim; ++c) {
            const double xhat = (xv[c] - mu) * is;
            x->grad[r * c_dim + c] += is * (g[c] * gamma->value[c] - mg - xhat * mgx);
          }
        }
      }
    };
  return out;
}

// ---------------------------------------------------------------------------
// Loss kernels
// ---------------------------------------------------------------------------

NodePtr weighted_l1(const NodePtr& a, const NodePtr& b,
                    const std::vector<double>& weight, double denom) {
  check_same_numel("weighted_l1", b, a->value.size());
  if (weight.size() != a->value.size())
    throw ContractViolation("weighted_l1: weight size mismatch");
  if (denom <= 0.0) throw ContractViolation("weighted_l1: denom must be > 0");
  auto out = make_op("weighted_l1", {1}, {a, b});
  double acc = 0.0;
  for (size_t i = 0; i < weight.size(); ++i)
    acc += weight[i] * std::abs(a->value[i] - b->value[i]);
  out->value[0] = acc / denom;
  if (out->requires_grad)
    out->backprop = [a, b, weight, denom](Node& self) {
      const double g = self.grad[0] / denom;
      for (size_t i = 0; i < weight.size(); ++i) {
        const double d = a->value[i] - b->value[i];
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        if (a->requires_grad) a->grad[i] += g * weight[i] * s;
        if (b->requires_grad) b->grad[i] -= g * weight[i] * s;
      }
    };
  return out;
}

NodePtr bce_mean(const NodePtr& pred, const std::vector<double>& target, double eps) {
  check_same_numel("bce_mean", pred, target.size());
  const size_t n = target.size();
  auto out = make_op("bce_mean", {1}, {pred});
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double p = std::min(1.0 - eps, std::max(eps, pred->value[i]));
    acc += -(target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p));
  }
  out->value[0] = acc / static_cast<double>(n);
  if (out->requires_grad)
    out->backprop = [pred, target, eps, n](Node& self) {
      const double g = self.grad[0] / static_cast<double>(n);
      for (size_t i = 0; i < n; ++i) {
        const double raw = pred->value[i];
        if (raw < eps || raw > 1.0 - eps) continue;  // clamp region, zero slope
        pred->grad[i] += g * (-target[i] / raw + (1.0 - target[i]) / (1.0 - raw));
      }
    };
  return out;
}

NodePtr rays_to_points(const NodePtr& ranges, const std::vector<Point3>& dirs) {
  if (ranges->shape.size() != 1 || ranges->value.size() != dirs.size())
    throw ContractViolation("rays_to_points: ranges must be (N) matching dirs");
  const int n = static_cast<int>(dirs.size());
  auto out = make_op("rays_to_points", {n, 3}, {ranges});
  for (int i = 0; i < n; ++i) {
    out->value[i * 3 + 0] = ranges->value[i] * dirs[i].x;
    out->value[i * 3 + 1] = ranges->value[i] * dirs[i].y;
    out->value[i * 3 + 2] = ranges->value[i] * dirs[i].z;
  }
  if (out->requires_grad)
    out->backprop = [ranges, dirs, n](Node& self) {
      for (int i = 0; i < n; ++i)
        ranges->grad[i] += dirs[i].x * self.grad[i * 3 + 0] +
                           dirs[i].y * self.grad[i * 3 + 1] +
                           dirs[i].z * self.grad[i * 3 + 2];
    };
  return out;
}

NodePtr chamfer_to_fixed(const NodePtr& pred_points, const std::vector<Point3>& gt) {
  if (pred_points->shape.size() != 2 || pred_points->shape[1] != 3)
    throw ContractViolation("chamfer: predicted points must be (N,3)");
  const int n = pred_points->shape[0];
  const int m = static_cast<int>(gt.size());
  if (n < 1 || m < 1)
    throw ContractViolation("chamfer: both clouds must be non-empty");

  std::vector<Point3> pred(n);
  for (int i = 0; i < n; ++i)
    pred[i] = Point3{pred_points->value[i * 3], pred_points->value[i * 3 + 1],
                     pred_points->value[i * 3 + 2]};

  KdTree gt_tree(gt);
  KdTree pred_tree(pred);
  std::vector<size_t> match_pred_to_gt(n), match_gt_to_pred(m);
  double term1 = 0.0, term2 = 0.0;
  for (int i = 0; i < n; ++i) {
    auto [j, d2] = gt_tree.nearest(pred[i]);
    match_pred_to_gt[i] = j;
    term1 += d2;
  }
  for (int j = 0; j < m; ++j) {
    auto [i, d2] = pred_tree.nearest(gt[j]);
    match_gt_to_pred[j] = i;
    term2 += d2;
  }

  auto out = make_op("chamfer", {1}, {pred_points});
  out->value[0] = term1 / n + term2 / m;
  if (out->requires_grad)
    out->backprop = [pred_points, gt, match_pred_to_gt, match_gt_to_pred, n, m](Node& self) {
      const double g = self.grad[0];
      for (int i = 0; i < n; ++i) {
        const Point3& q = gt[match_pred_to_gt[i]];
        pred_points->grad[i * 3 + 0] += g * 2.0 * (pred_points->value[i * 3 + 0] - q.x) / n;
        pred_points->grad[i * 3 + 1] += g * 2.0 * (pred_points->value[i * 3 + 1] - q.y) / n;
        pred_points->grad[i * 3 + 2] += g * 2.0 * (pred_points->value[i * 3 + 2] - q.z) / n;
      }
      for (int j = 0; j < m; ++j) {
        const size_t i = match_gt_to_pred[j];
        pred_points->grad[i * 3 + 0] += g * 2.0 * (pred_points->value[i * 3 + 0] - gt[j].x) / m;
        pred_points->grad[i * 3 + 1] += g * 2.0 * (pred_points->value[i * 3 + 1] - gt[j].y) / m;
        pred_points->grad[i * 3 + 2] += g * 2.0 * (pred_points->value[i * 3 + 2] - gt[j].z) / m;
      }
    };
  return out;
}

}  // namespace rangecast::ag
