#include "rangecast/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace rangecast::ag {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ContractViolation("tensor shape has non-positive extent " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

NodePtr make_leaf(const Shape& shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(shape_numel(shape), 0.0);
  n->requires_grad = requires_grad;
  return n;
}

NodePtr make_const(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape))
    throw ContractViolation("make_const: value count does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

NodePtr make_scalar(double v) { return make_const({1}, {v}); }

void backward(const NodePtr& loss) {
  if (!loss) throw ContractViolation("backward: null loss");
  if (loss->numel() != 1)
    throw ContractViolation("backward: loss must have exactly one element, got " +
                            shape_str(loss->shape));
  if (!loss->requires_grad) return;  // nothing reachable requires grad

  // Post-order DFS over the requires_grad subgraph; reversed order runs each
  // node's backprop before any of its parents'.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace rangecast::ag
