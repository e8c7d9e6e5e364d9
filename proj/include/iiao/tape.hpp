#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "iiao/tensor.hpp"

namespace iiao {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

class Tape;

// Propagates the gradient of node `self` into its parents.
using BackwardFn = std::function<void(Tape& tape, Var self)>;

// Records the forward computation as a flat list of nodes in execution order;
// backward() walks it in reverse. A tape is built fresh for every forward
// pass and is confined to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaf node. Gradients are accumulated for it when requires_grad is set.
  Var input(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return input(std::move(value), false); }

  // Interior node. `backward` is dropped when no parent requires a gradient.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  // Gradient of the last backward() root with respect to `v`; zeros if the
  // node received no gradient.
  std::span<const double> grad(Var v) const;
  // Mutable gradient buffer, allocated on first use. For backward functions.
  std::span<double> grad_mut(Var v);

  // Seeds d(root)/d(root) = 1 and runs every recorded backward function in
  // reverse order. `root` must hold a single element.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace iiao
