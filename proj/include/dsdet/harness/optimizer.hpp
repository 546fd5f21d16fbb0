// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "dsdet/harness/run_config.hpp"
#include "dsdet/numerics/nn.hpp"

namespace dsdet::harness {

// Global L2 norm over every parameter gradient.
template <typename T>
double gradient_norm(const numerics::ParameterStore<T>& store);

// Scales all gradients so their global norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_gradients(numerics::ParameterStore<T>& store, double max_norm);

// Adam with decoupled weight decay on ".weight" tensors.
template <typename T>
class Adam {
 public:
  explicit Adam(OptimizerConfig config) : config_(config) {}

  // Clips, then applies one update with learning rate lr. Returns the
  // pre-clip gradient norm.
  double step(numerics::ParameterStore<T>& store, double lr);

  int steps() const { return t_; }
  // Moments in parameter order: m then v, one flat vector each.
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(int steps, std::vector<double> m, std::vector<double> v);

 private:
  OptimizerConfig config_;
  int t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace dsdet::harness
