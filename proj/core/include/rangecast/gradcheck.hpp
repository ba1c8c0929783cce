#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rangecast/rng.hpp"
#include "rangecast/tensor.hpp"

namespace rangecast::ag {

struct GradCheck {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Central finite differences against the analytic gradient of a scalar
/// loss. The builder must recompute the forward pass from the current leaf
/// values on every call. Returns the worst relative error over the probed
/// entries.
double finite_diff_rel_err(const std::function<NodePtr()>& loss,
                           const std::vector<NodePtr>& leaves, double eps,
                           int probes_per_leaf, Rng& rng);

/// One check per differentiable kernel plus the end-to-end training loss at
/// toy scale.
std::vector<GradCheck> run_gradcheck_suite(uint64_t seed, double eps = 1e-4,
                                           double tol = 1e-3);

}  // namespace rangecast::ag
