// SPDX-License-Identifier: Apache-2.0
//
// Parameter registry and the small set of layers the detector is built from.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsdet/numerics/ops.hpp"
#include "dsdet/numerics/tensor.hpp"

namespace dsdet::numerics {

// Platform-stable uniform/normal draws on top of mt19937_64 (the standard
// distributions are implementation-defined, which would break checkpoint
// reproducibility across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
class ParameterStore {
 public:
  // Registers a trainable tensor; names must be unique.
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values);
  Tensor<T> xavier(const std::string& name, int fan_in, int fan_out, Rng& rng);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

  const std::vector<Parameter<T>>& params() const { return params_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const Parameter<T>* find(const std::string& name) const;
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  static Linear create(ParameterStore<T>& store, const std::string& name, int in, int out, Rng& rng,
                       T bias_init = T(0));
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-5);

  static LayerNorm create(ParameterStore<T>& store, const std::string& name, int width, T eps);
  Tensor<T> operator()(const Tensor<T>& x) const { return layernorm(x, gain, bias, eps); }
};

// Two linear layers with one nonlinearity between them.
template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;
  Activation act = Activation::kGelu;

  static Mlp create(ParameterStore<T>& store, const std::string& name, int in, int hidden, int out, Activation act,
                    Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(activation(fc1(x), act)); }
};

template <typename T>
Tensor<T> mlp_block(const Tensor<T>& x, const Mlp<T>& params) {
  return params(x);
}

// Multi-head attention with input/output projections. Queries attend over
// `memory`; self-attention passes the same tensor twice.
template <typename T>
struct Attention {
  Linear<T> q_proj;
  Linear<T> k_proj;
  Linear<T> v_proj;
  Linear<T> out_proj;
  int heads = 1;

  static Attention create(ParameterStore<T>& store, const std::string& name, int width, int heads, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& memory,
                       std::span<const unsigned char> key_mask = {}) const;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace dsdet::numerics
