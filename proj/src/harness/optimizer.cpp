// SPDX-License-Identifier: Apache-2.0

#include "dsdet/harness/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace dsdet::harness {

template <typename T>
double gradient_norm(const numerics::ParameterStore<T>& store) {
  double sq = 0;
  for (const auto& p : store.params()) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <typename T>
double clip_gradients(numerics::ParameterStore<T>& store, double max_norm) {
  const double norm = gradient_norm(store);
  if (norm > max_norm && norm > 0.0) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : store.params()) {
      if (!p.tensor.has_grad()) continue;
      for (T& g : p.tensor.mutable_grad()) g *= s;
    }
  }
  return norm;
}

template <typename T>
double Adam<T>::step(numerics::ParameterStore<T>& store, double lr) {
  const double norm = clip_gradients(store, config_.clip_norm);
  const std::size_t total = store.total_size();
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }
  if (m_.size() != total) throw std::logic_error("Adam: parameter set changed size");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  std::size_t off = 0;
  for (auto& p : store.params()) {
    auto values = p.tensor.mutable_values();
    const bool decay = p.name.size() >= 7 && p.name.compare(p.name.size() - 7, 7, ".weight") == 0;
    const bool has = p.tensor.has_grad();
    const auto grad = has ? p.tensor.grad() : std::span<const T>{};
    for (std::size_t i = 0; i < values.size(); ++i, ++off) {
      const double g = has ? static_cast<double>(grad[i]) : 0.0;
      m_[off] = b1 * m_[off] + (1.0 - b1) * g;
      v_[off] = b2 * v_[off] + (1.0 - b2) * g * g;
      double w = values[i];
      if (decay) w -= lr * config_.weight_decay * w;
      w -= lr * (m_[off] / c1) / (std::sqrt(v_[off] / c2) + config_.eps);
      values[i] = static_cast<T>(w);
    }
  }
  return norm;
}

template <typename T>
void Adam<T>::restore(int steps, std::vector<double> m, std::vector<double> v) {
  if (m.size() != v.size()) throw std::invalid_argument("Adam::restore: moment sizes differ");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

template double gradient_norm(const numerics::ParameterStore<float>&);
template double gradient_norm(const numerics::ParameterStore<double>&);
template double clip_gradients(numerics::ParameterStore<float>&, double);
template double clip_gradients(numerics::ParameterStore<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace dsdet::harness
