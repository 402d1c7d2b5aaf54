#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "facefuse/nn/tensor.hpp"

namespace facefuse::nn {

// One value in a dynamically recorded computation graph. `backward` reads
// this node's gradient and accumulates into the gradients of `inputs`.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value) { return Var(std::move(value), false); }
  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Empty until a backward pass reaches this node.
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  T item() const { return node_->value[0]; }
  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  std::shared_ptr<Node<T>> node_;
};

namespace detail {
inline thread_local bool grad_recording = true;
}

// Disables graph recording on this thread for its lifetime (inference, frozen nets).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_recording) { detail::grad_recording = false; }
  ~NoGradGuard() { detail::grad_recording = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Records an op result. The closure is dropped when no input needs a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, const std::vector<Var<T>>& inputs,
                   std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (detail::grad_recording) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

// Reverse-mode sweep from a scalar root; gradients accumulate into every
// reachable node that requires one.
template <typename T>
void backward(const Var<T>& root);

extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace facefuse::nn
