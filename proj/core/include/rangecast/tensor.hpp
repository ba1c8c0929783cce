#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rangecast/errors.hpp"

namespace rangecast::ag {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// One value in the computation graph: a dense row-major buffer plus an
/// optional gradient slot and the closure that propagates gradients to its
/// parents. Leaves (parameters, inputs) have no parents.
class Node {
 public:
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily during backward
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() { grad.assign(value.size(), 0.0); }
};

using NodePtr = std::shared_ptr<Node>;

/// Uninitialized (zero-filled) leaf.
NodePtr make_leaf(const Shape& shape, bool requires_grad = false);

/// Leaf with the given row-major values.
NodePtr make_const(const Shape& shape, std::vector<double> values,
                   bool requires_grad = false);

NodePtr make_scalar(double v);

/// Reverse-mode gradient propagation from a single-element loss. Gradients
/// accumulate into every reachable node with requires_grad; callers zero
/// parameter grads beforehand.
void backward(const NodePtr& loss);

}  // namespace rangecast::ag
