#pragma once

#include <vector>

#include "rangecast/nn.hpp"

namespace rangecast::nn {

/// Bias-corrected Adam over the parameters of one ParamStore.
class Adam {
 public:
  explicit Adam(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  /// One update from the gradients currently on the parameters.
  void step(double lr);

  int64_t step_count() const { return step_count_; }

 private:
  struct Slot {
    NodePtr param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  int64_t step_count_ = 0;
};

}  // namespace rangecast::nn
