#include "iiao/tape.hpp"

#include <algorithm>

namespace iiao {

Var Tape::input(Tensor value, bool requires_grad) {
  value.drop_grad();
  nodes_.push_back(Node{std::move(value), requires_grad, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](Var p) { return nodes_.at(p.index).requires_grad; });
  value.drop_grad();
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

std::span<const double> Tape::grad(Var v) const {
  const Tensor& t = nodes_.at(v.index).value;
  if (!t.has_grad()) {
    static thread_local std::vector<double> zeros;
    zeros.assign(t.size(), 0.0);
    return zeros;
  }
  return t.grad();
}

std::span<double> Tape::grad_mut(Var v) { return nodes_.at(v.index).value.grad(); }

void Tape::backward(Var root) {
  if (nodes_.at(root.index).value.size() != 1)
    throw ShapeError("backward() root must be a scalar, got " +
                     shape_str(nodes_[root.index].value.shape()));
  for (Node& n : nodes_) n.value.drop_grad();
  nodes_[root.index].value.grad()[0] = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.value.has_grad()) continue;
    n.backward(*this, Var{i});
  }
}

}  // namespace iiao
