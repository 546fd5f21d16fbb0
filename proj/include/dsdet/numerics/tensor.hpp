// SPDX-License-Identifier: Apache-2.0
//
// Dense tensor with reverse-mode differentiation. A Tensor is a cheap handle
// to an immutable value buffer plus an optional gradient buffer; operations
// always produce new tensors, so sharing a handle never aliases a mutation
// except on leaves (parameters), which the optimizer updates in place.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsdet::numerics {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

std::uint64_t next_node_id();

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T v, bool requires_grad = false) { return Tensor(Shape{1}, std::vector<T>{v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i < 0 ? ndim() + i : i)); }
  int rows() const { return dim(0); }
  int cols() const { return ndim() >= 2 ? dim(1) : 1; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  // Mutable access for leaves only (parameter init, optimizer updates).
  std::span<T> mutable_values();
  T operator[](std::size_t i) const { return node_->value[i]; }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad();

  std::uint64_t id() const { return node_->id; }
  bool is_leaf() const { return !node_->backward; }

  // Seeds d(self)/d(self) = 1 for every element (i.e. differentiates sum(self))
  // and propagates through the recorded graph.
  void backward() const;

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  NodePtr node_;
};

// Creates a result tensor wired into the graph when any input requires grad
// and recording is enabled. `backward` receives the result node.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(detail::Node<T>&)> backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dsdet::numerics
