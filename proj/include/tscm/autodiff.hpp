#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tscm/tensor.hpp"

namespace tscm {

/// A recorded value in the reverse-mode graph. Nodes own their value and,
/// once backward reaches them, a gradient of the same shape.
template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  Tensor<S>& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor<S>(value.shape());
    return grad;
  }
};

/// Shared handle to a graph node. Copies alias the same node.
template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<S> value) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<S> value) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  /// Gradient accumulated so far; zeros if backward never reached this node.
  Tensor<S> grad() const { return has_grad() ? node_->grad : Tensor<S>(node_->value.shape()); }
  void zero_grad() {
    if (node_) node_->grad = Tensor<S>();
  }
  const std::shared_ptr<Node<S>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

/// Whether ops currently record backward closures on this thread.
bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps a forward result as a graph node. The backward closure is attached
/// only if recording is on and some input requires a gradient.
template <class S>
Var<S> make_result(Tensor<S> value, std::vector<Var<S>> inputs, std::function<void(Node<S>&)> backward) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (!grad_enabled()) return Var<S>(std::move(n));
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var<S>(std::move(n));
}

/// Gradient slot of a parent, or nullptr when that parent needs no gradient.
template <class S>
Tensor<S>* parent_grad(Node<S>& self, std::size_t index) {
  auto& p = self.parents.at(index);
  if (!p || !p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

/// Reverse sweep from a single-element loss. Leaf gradients accumulate
/// across calls until zero_grad.
template <class S>
void backward(const Var<S>& loss);

extern template void backward(const Var<float>&);
extern template void backward(const Var<double>&);

}  // namespace tscm
