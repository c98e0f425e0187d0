#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "sgmc/error.hpp"
#include "sgmc/tensor.hpp"

namespace sgmc {

using Var = int;

// Define-by-run computation graph. Ops append nodes in execution order, which
// is a valid topological order, so reverse-mode differentiation is a single
// backward sweep over the node list.
template <class T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily in backward()
    std::vector<Var> inputs;
    std::function<void(Tape&, Var)> backprop;  // (tape, self id)
    bool needs_grad = false;
  };

  Var leaf(Tensor<T> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var emplace(Tensor<T> value, std::vector<Var> inputs,
              std::function<void(Tape&, Var)> backprop) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (Var in : n.inputs)
      if (node(in).needs_grad) n.needs_grad = true;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  const Tensor<T>& value(Var v) const { return nodes_[v].value; }
  const Tensor<T>& grad(Var v) const { return nodes_[v].grad; }

  // Accumulation target used by backprop closures.
  Tensor<T>& grad_buffer(Var v) {
    Node& n = nodes_[v];
    if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    if (value(loss).numel() != 1)
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_str(value(loss).shape()));
    grad_buffer(loss)[0] = T(1);
    for (Var v = loss; v >= 0; --v) {
      Node& n = nodes_[v];
      if (!n.needs_grad || !n.backprop || n.grad.numel() == 0) continue;
      n.backprop(*this, v);
    }
  }

 private:
  Node& node(Var v) { return nodes_[v]; }
  std::vector<Node> nodes_;
};

}  // namespace sgmc
