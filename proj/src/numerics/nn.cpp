// SPDX-License-Identifier: Apache-2.0

#include "dsdet/numerics/nn.hpp"

#include <cmath>

#include "dsdet/numerics/attention.hpp"

namespace dsdet::numerics {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

template <typename T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, std::vector<T> values) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor<T> t(std::move(shape), std::move(values), true);
  index_.emplace(name, params_.size());
  params_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParameterStore<T>::xavier(const std::string& name, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(static_cast<std::size_t>(fan_in) * fan_out);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
  return add(name, {fan_in, fan_out}, std::move(v));
}

template <typename T>
Tensor<T> ParameterStore<T>::constant(const std::string& name, Shape shape, T value) {
  std::vector<T> v(shape_numel(shape), value);
  return add(name, std::move(shape), std::move(v));
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
std::size_t ParameterStore<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Linear<T> Linear<T>::create(ParameterStore<T>& store, const std::string& name, int in, int out, Rng& rng,
                            T bias_init) {
  Linear l;
  l.weight = store.xavier(name + ".weight", in, out, rng);
  l.bias = store.constant(name + ".bias", {out}, bias_init);
  return l;
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(ParameterStore<T>& store, const std::string& name, int width, T eps) {
  LayerNorm ln;
  ln.gain = store.constant(name + ".gain", {width}, T(1));
  ln.bias = store.constant(name + ".bias", {width}, T(0));
  ln.eps = eps;
  return ln;
}

template <typename T>
Mlp<T> Mlp<T>::create(ParameterStore<T>& store, const std::string& name, int in, int hidden, int out, Activation act,
                      Rng& rng) {
  Mlp m;
  m.fc1 = Linear<T>::create(store, name + ".fc1", in, hidden, rng);
  m.fc2 = Linear<T>::create(store, name + ".fc2", hidden, out, rng);
  m.act = act;
  return m;
}

template <typename T>
Attention<T> Attention<T>::create(ParameterStore<T>& store, const std::string& name, int width, int heads,
                                  Rng& rng) {
  Attention a;
  a.q_proj = Linear<T>::create(store, name + ".q", width, width, rng);
  a.k_proj = Linear<T>::create(store, name + ".k", width, width, rng);
  a.v_proj = Linear<T>::create(store, name + ".v", width, width, rng);
  a.out_proj = Linear<T>::create(store, name + ".out", width, width, rng);
  a.heads = heads;
  return a;
}

template <typename T>
Tensor<T> Attention<T>::operator()(const Tensor<T>& query, const Tensor<T>& memory,
                                   std::span<const unsigned char> key_mask) const {
  auto q = q_proj(query);
  auto k = k_proj(memory);
  auto v = v_proj(memory);
  return out_proj(multi_head_attention(q, k, v, heads, key_mask));
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct Attention<float>;
template struct Attention<double>;

}  // namespace dsdet::numerics
