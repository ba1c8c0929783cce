#include "rangecast/adam.hpp"

#include <cmath>

namespace rangecast::nn {

Adam::Adam(const ParamStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [_, p] : store.params()) {
    Slot slot;
    slot.param = p;
    slot.m.assign(p->value.size(), 0.0);
    slot.v.assign(p->value.size(), 0.0);
    slots_.push_back(std::move(slot));
  }
}

void Adam::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (auto& slot : slots_) {
    auto& p = *slot.param;
    if (p.grad.size() != p.value.size()) continue;  // no gradient this step
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
      slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace rangecast::nn
