#include "rangecast/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rangecast/losses.hpp"
#include "rangecast/model.hpp"
#include "rangecast/ops.hpp"
#include "rangecast/segmenter.hpp"
#include "rangecast/synth.hpp"

namespace rangecast::ag {

double finite_diff_rel_err(const std::function<NodePtr()>& loss,
                           const std::vector<NodePtr>& leaves, double eps,
                           int probes_per_leaf, Rng& rng) {
  for (const auto& leaf : leaves) leaf->zero_grad();
  NodePtr l0 = loss();
  backward(l0);
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) {
    leaf->ensure_grad();
    analytic.push_back(leaf->grad);
  }

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Node& leaf = *leaves[li];
    const size_t n = leaf.value.size();
    for (int probe = 0; probe < probes_per_leaf; ++probe) {
      const size_t i = rng.uniform_index(n);
      const double saved = leaf.value[i];
      leaf.value[i] = saved + eps;
      const double up = loss()->value[0];
      leaf.value[i] = saved - eps;
      const double down = loss()->value[0];
      leaf.value[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = analytic[li][i];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  }
  return worst;
}

namespace {

NodePtr random_leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  NodePtr leaf = make_leaf(shape, /*requires_grad=*/true);
  for (auto& v : leaf->value) v = rng.uniform(lo, hi);
  return leaf;
}

struct Suite {
  std::vector<GradCheck> results;
  Rng rng;
  double eps, tol;

  Suite(uint64_t seed, double eps_, double tol_) : rng(seed), eps(eps_), tol(tol_) {}

  void check(const std::string& name, const std::function<NodePtr()>& loss,
             const std::vector<NodePtr>& leaves, int probes = 4) {
    Rng probe_rng = rng.fork(results.size() + 100);
    GradCheck g;
    g.name = name;
    g.max_rel_err = finite_diff_rel_err(loss, leaves, eps, probes, probe_rng);
    g.pass = g.max_rel_err < tol;
    results.push_back(g);
  }
};

void check_elementwise(Suite& s) {
  Rng& rng = s.rng;
  {
    NodePtr a = random_leaf({3, 4}, rng);
    NodePtr b = random_leaf({4}, rng);  // trailing broadcast
    s.check("add", [=] { return sum_all(mul(add(a, b), add(a, b))); }, {a, b});
    s.check("sub", [=] { return sum_all(mul(sub(a, b), sub(a, b))); }, {a, b});
    s.check("mul", [=] { return sum_all(mul(a, b)); }, {a, b});
  }
  {
    NodePtr x = random_leaf({2, 5}, rng);
    s.check("sigmoid", [=] { return sum_all(sigmoid(x)); }, {x});
    s.check("add_scalar/mul_scalar",
            [=] { return sum_all(mul_scalar(add_scalar(x, 0.7), 1.3)); }, {x});
  }
  {
    // keep probe points away from the kinks
    NodePtr x = random_leaf({3, 3}, rng);
    for (auto& v : x->value) v += v >= 0.0 ? 0.05 : -0.05;
    s.check("leaky_relu", [=] { return sum_all(leaky_relu(x, 0.01)); }, {x});
    NodePtr y = random_leaf({7}, rng, -2.0, 2.0);
    for (auto& v : y->value)
      if (std::abs(std::abs(v) - 1.0) < 0.05) v *= 1.2;
    s.check("clamp", [=] { return sum_all(mul(clamp(y, -1.0, 1.0), y)); }, {y});
  }
  {
    NodePtr x = random_leaf({6}, rng, 0.2, 2.0);
    s.check("log", [=] { return sum_all(log_op(x)); }, {x});
  }
}

void check_shape_moves(Suite& s) {
  Rng& rng = s.rng;
  NodePtr x = random_leaf({2, 3, 4}, rng);
  s.check("reshape", [=] { return sum_all(mul(reshape(x, {6, 4}), reshape(x, {6, 4}))); },
          {x});
  s.check("permute",
          [=] {
            NodePtr p = permute(x, {2, 0, 1});
            return sum_all(mul(p, p));
          },
          {x});
  NodePtr y = random_leaf({2, 3, 4}, rng);
  s.check("concat",
          [=] {
            NodePtr c = concat({x, y}, 1);
            return sum_all(mul(c, c));
          },
          {x, y});
  s.check("slice",
          [=] {
            NodePtr c = slice(x, 2, 1, 2);
            return sum_all(mul(c, c));
          },
          {x});
  s.check("gather_flat",
          [=] {
            NodePtr g = gather_flat(x, {0, 5, 5, 23, 11});
            return sum_all(mul(g, g));
          },
          {x});
}

void check_contractions(Suite& s) {
  Rng& rng = s.rng;
  {
    NodePtr a = random_leaf({3, 4}, rng);
    NodePtr b = random_leaf({4, 2}, rng);
    s.check("matmul", [=] { return sum_all(mul(matmul(a, b), matmul(a, b))); }, {a, b});
  }
  {
    NodePtr a = random_leaf({2, 3, 4}, rng);
    NodePtr b = random_leaf({2, 4, 3}, rng);
    s.check("bmm", [=] { return sum_all(mul(bmm(a, b), bmm(a, b))); }, {a, b});
  }
  {
    NodePtr x = random_leaf({3, 5}, rng);
    NodePtr w = random_leaf({3, 5}, rng);
    s.check("softmax_last", [=] { return sum_all(mul(softmax_last(x), w)); }, {x});
    s.check("softmax_axis", [=] { return sum_all(mul(softmax_axis(x, 0), w)); }, {x});
  }
  {
    NodePtr x = random_leaf({4, 2, 3, 5}, rng);
    NodePtr w = random_leaf({4}, rng);
    s.check("global_avg_pool", [=] { return sum_all(mul(global_avg_pool(x), w)); }, {x});
    s.check("mean_all", [=] { return mean_all(mul(x, x)); }, {x});
  }
}

void check_convs(Suite& s) {
  Rng& rng = s.rng;
  {
    NodePtr x = random_leaf({2, 3, 4, 6}, rng);
    NodePtr w = random_leaf({3, 2, 3, 3, 3}, rng, -0.5, 0.5);
    NodePtr b = random_leaf({3}, rng);
    Conv3dSpec zero{{1, 2, 2}, {1, 1, 1}, false};
    Conv3dSpec circ{{1, 1, 1}, {1, 1, 1}, true};
    s.check("conv3d_zero_pad",
            [=] {
              NodePtr y = conv3d(x, w, b, zero);
              return sum_all(mul(y, y));
            },
            {x, w, b});
    s.check("conv3d_circular",
            [=] {
              NodePtr y = conv3d(x, w, b, circ);
              return sum_all(mul(y, y));
            },
            {x, w, b});
  }
  {
    NodePtr x = random_leaf({2, 3, 2, 3}, rng);
    NodePtr w = random_leaf({2, 3, 3, 3, 3}, rng, -0.5, 0.5);
    NodePtr b = random_leaf({3}, rng);
    Conv3dSpec spec{{1, 2, 2}, {1, 1, 1}, true};
    s.check("conv3d_transpose",
            [=] {
              NodePtr y = conv3d_transpose(x, w, b, spec, {3, 4, 6});
              return sum_all(mul(y, y));
            },
            {x, w, b});
  }
  {
    NodePtr x = random_leaf({8}, rng);
    NodePtr w = random_leaf({3}, rng);
    NodePtr b = random_leaf({1}, rng);
    s.check("conv1d_circular",
            [=] {
              NodePtr y = conv1d_circular(x, w, b);
              return sum_all(mul(y, y));
            },
            {x, w, b});
  }
}

void check_norms(Suite& s) {
  Rng& rng = s.rng;
  {
    NodePtr x = random_leaf({3, 2, 4, 5}, rng);
    NodePtr gamma = random_leaf({3}, rng, 0.5, 1.5);
    NodePtr beta = random_leaf({3}, rng);
    auto mean = std::make_shared<std::vector<double>>(3, 0.0);
    auto var = std::make_shared<std::vector<double>>(3, 1.0);
    s.check("batch_norm3d",
            [=] {
              NodePtr y = batch_norm3d(x, gamma, beta, *mean, *var, /*training=*/true);
              return sum_all(mul(y, y));
            },
            {x, gamma, beta});
  }
  {
    NodePtr x = random_leaf({4, 6}, rng);
    NodePtr gamma = random_leaf({6}, rng, 0.5, 1.5);
    NodePtr beta = random_leaf({6}, rng);
    s.check("layer_norm_last",
            [=] {
              NodePtr y = layer_norm_last(x, gamma, beta);
              return sum_all(mul(y, y));
            },
            {x, gamma, beta});
  }
}

void check_loss_kernels(Suite& s) {
  Rng& rng = s.rng;
  {
    NodePtr a = random_leaf({3, 4}, rng);
    NodePtr b = random_leaf({3, 4}, rng);
    for (size_t i = 0; i < b->value.size(); ++i)
      b->value[i] = a->value[i] + (i % 2 ? 0.5 : -0.7);  // residuals off the kink
    std::vector<double> weight(12, 0.0);
    for (size_t i = 0; i < weight.size(); i += 2) weight[i] = 1.0;
    s.check("weighted_l1", [=] { return weighted_l1(a, b, weight, 6.0); }, {a, b});
  }
  {
    NodePtr p = random_leaf({2, 5}, rng, 0.05, 0.95);
    std::vector<double> target(10);
    for (size_t i = 0; i < target.size(); ++i) target[i] = i % 3 == 0 ? 1.0 : 0.0;
    s.check("bce_mean", [=] { return bce_mean(p, target, 1e-7); }, {p});
  }
  {
    NodePtr r = random_leaf({6}, rng, 1.0, 5.0);
    std::vector<Point3> dirs;
    for (int i = 0; i < 6; ++i) {
      const double a = 0.3 + 0.9 * i;
      dirs.push_back({std::cos(a), std::sin(a), 0.1 * i});
    }
    NodePtr w = random_leaf({6, 3}, rng);
    s.check("rays_to_points", [=] { return sum_all(mul(rays_to_points(r, dirs), w)); },
            {r, w});
    std::vector<Point3> gt;
    for (int i = 0; i < 5; ++i)
      gt.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)});
    s.check("chamfer_to_fixed",
            [=] { return chamfer_to_fixed(rays_to_points(r, dirs), gt); }, {r});
  }
}

void check_nn_blocks(Suite& s) {
  nn::ParamStore store;
  Rng init = s.rng.fork(50);
  {
    nn::Eca eca(store, init, "eca", 8);
    NodePtr x = random_leaf({8, 2, 3, 4}, s.rng);
    s.check("eca", [=] { return sum_all(mul(eca.forward(x), x)); },
            {x, eca.w, eca.b});
  }
  {
    nn::TransformerLayer layer(store, init, "attn", 8, 2, 16);
    NodePtr x = random_leaf({6, 8}, s.rng);
    s.check("attention_layer", [=] { return sum_all(mul(layer.forward(x), x)); },
            {x, layer.wq.w, layer.wk.w, layer.wv.w, layer.wo.b, layer.ff1.w,
             layer.ln_attn.gamma});
  }
}

void check_end_to_end(Suite& s) {
  const SensorModel sensor = SensorModel::from_degrees(16, 64, 3.0, 25.0, 30.0);
  SyntheticSceneConfig scene;
  scene.seed = 11;
  scene.n_frames = 10;
  scene.n_boxes = 2;
  const auto frames = generate_synthetic_frames(scene, sensor);
  const auto samples = window_frames(frames, 5, 5, 10);

  ModelConfig mcfg;
  mcfg.input_height = 16;
  mcfg.input_width = 64;
  mcfg.channels = {4, 8};
  mcfg.attn_heads = 2;
  mcfg.max_range = sensor.max_range;
  mcfg.seed = 3;
  PredictorModel model(mcfg);

  SegmenterConfig scfg;
  scfg.widths = {6};
  scfg.max_range = sensor.max_range;
  scfg.seed = 5;
  Segmenter seg(scfg);
  seg.freeze();

  const SequenceSample& sample = samples.at(0);
  NodePtr input = model.make_input(sample.past);

  // Freeze the discrete choices (chamfer pixel/point selection) from the
  // initial forward so the finite differences probe a smooth function.
  ModelOutput out0 = model.forward(input, true);
  const size_t pixels = static_cast<size_t>(16) * 64;
  const int f_frames = mcfg.future_frames;
  std::vector<std::vector<int64_t>> flat(f_frames);
  std::vector<std::vector<Point3>> dirs(f_frames), gt_pts(f_frames);
  Rng pick_rng = s.rng.fork(77);
  for (int k = 0; k < f_frames; ++k) {
    std::vector<int64_t> cand;
    for (size_t p = 0; p < pixels; ++p)
      if (out0.mask_prob->value[k * pixels + p] > 0.5) cand.push_back(p);
    if (cand.empty())
      for (size_t p = 0; p < pixels; p += 16) cand.push_back(p);
    for (int i = 0; i < 48 && !cand.empty(); ++i) {
      const size_t j = pick_rng.uniform_index(cand.size());
      const int64_t p = cand[j];
      cand.erase(cand.begin() + j);
      flat[k].push_back(static_cast<int64_t>(k) * pixels + p);
      dirs[k].push_back(pixel_ray_direction(static_cast<int>(p % 64),
                                            static_cast<int>(p / 64), sensor));
    }
    PointCloud gt = range_image_to_cloud(sample.future[k], sensor);
    for (int i = 0; i < 48 && !gt.points.empty(); ++i)
      gt_pts[k].push_back(gt.points[pick_rng.uniform_index(gt.points.size())]);
  }

  auto loss = [&, input, sample] {
    ModelOutput out = model.forward(input, true);
    NodePtr l_r = loss_range(out.range_pred, sample.future);
    NodePtr l_m = loss_mask(out.mask_prob, sample.future);
    Rng frame_rng(99);  // same frame pick on every evaluation
    NodePtr l_s = aux_semantic_loss(out, sample.future, seg, frame_rng);
    NodePtr sum;
    for (int k = 0; k < f_frames; ++k) {
      NodePtr pts = rays_to_points(gather_flat(out.range_pred, flat[k]), dirs[k]);
      NodePtr c = chamfer_to_fixed(pts, gt_pts[k]);
      sum = sum ? add(sum, c) : c;
    }
    NodePtr l_c = mul_scalar(sum, 1.0 / f_frames);
    return total_loss(l_r, l_m, l_s, l_c, LossWeights{1.0, 1.0});
  };

  std::vector<NodePtr> leaves;
  Rng leaf_rng = s.rng.fork(78);
  const auto& params = model.store().params();
  for (int i = 0; i < 16; ++i)
    leaves.push_back(params[leaf_rng.uniform_index(params.size())].second);
  std::sort(leaves.begin(), leaves.end());
  leaves.erase(std::unique(leaves.begin(), leaves.end()), leaves.end());
  s.check("end_to_end_total_loss", loss, leaves, 2);
}

}  // namespace

std::vector<GradCheck> run_gradcheck_suite(uint64_t seed, double eps, double tol) {
  Suite s(seed, eps, tol);
  check_elementwise(s);
  check_shape_moves(s);
  check_contractions(s);
  check_convs(s);
  check_norms(s);
  check_loss_kernels(s);
  check_nn_blocks(s);
  check_end_to_end(s);
  return s.results;
}

}  // namespace rangecast::ag
