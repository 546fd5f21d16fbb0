// SPDX-License-Identifier: Apache-2.0

#include "dsdet/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace dsdet::numerics {
namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace detail {
std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value.assign(n, fill);
  node_->requires_grad = requires_grad;
  node_->id = detail::next_node_id();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (n != values.size())
    throw DimensionError("shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->id = detail::next_node_id();
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!is_leaf()) throw std::logic_error("mutable_values() on a non-leaf tensor");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::backward() const {
  using N = detail::Node<T>;
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<N*> order;
  std::unordered_set<N*> visited;
  std::vector<std::pair<N*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      N* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (N* n : order) {
    if (n->backward) {
      n->grad.assign(n->value.size(), T(0));
    } else {
      n->ensure_grad();
    }
  }
  std::fill(node_->grad.begin(), node_->grad.end(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(detail::Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::move(backward);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(detail::Node<double>&)>);

}  // namespace dsdet::numerics
