// SPDX-License-Identifier: Apache-2.0

#include "dsdet/model/baseline_decoder.hpp"

#include <cmath>
#include <numbers>

#include "dsdet/numerics/ops.hpp"

namespace dsdet::model {

namespace nx = dsdet::numerics;

std::vector<double> box_sine_embedding(std::span<const double> boxes, int channels) {
  const int half = channels / 2;
  const std::size_t n = boxes.size() / 4;
  std::vector<double> out(n * 2 * channels);
  for (std::size_t q = 0; q < n; ++q) {
    double* row = &out[q * 2 * channels];
    for (int coord = 0; coord < 4; ++coord) {
      const double v = boxes[q * 4 + coord] * 2.0 * std::numbers::pi;
      for (int i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / half);
        row[coord * half + 2 * i] = std::sin(v * freq);
        row[coord * half + 2 * i + 1] = std::cos(v * freq);
      }
    }
  }
  return out;
}

template <typename T>
BaselineDecoder<T>::BaselineDecoder(const DetectorConfig& config, int layers) : config_(config) {
  config_.validate();
  nx::Rng rng(config_.seed ^ 0xB45E11AEULL);
  const int c = config_.channels;
  const T eps = static_cast<T>(config_.ln_eps);
  pq_head_ = nx::Mlp<T>::create(store_, "baseline.pq", 2 * c, c, c, nx::Activation::kRelu, rng);
  for (int i = 0; i < layers; ++i) {
    const std::string name = "baseline.layer" + std::to_string(i);
    Layer l;
    l.sa = nx::Attention<T>::create(store_, name + ".sa", c, config_.heads, rng);
    l.ln1 = nx::LayerNorm<T>::create(store_, name + ".ln1", c, eps);
    l.ca = nx::Attention<T>::create(store_, name + ".ca", c, config_.heads, rng);
    l.ln2 = nx::LayerNorm<T>::create(store_, name + ".ln2", c, eps);
    l.mlp = nx::Mlp<T>::create(store_, name + ".mlp", c, config_.mlp_hidden, c, config_.activation, rng);
    l.ln3 = nx::LayerNorm<T>::create(store_, name + ".ln3", c, eps);
    l.cls = nx::Linear<T>::create(store_, name + ".cls", c, config_.num_classes, rng);
    l.box = nx::Mlp<T>::create(store_, name + ".box", c, c, 4, config_.activation, rng);
    layers_.push_back(std::move(l));
  }
}

template <typename T>
std::vector<LayerOutput<T>> BaselineDecoder<T>::decode(const Tensor<T>& queries, const Tensor<T>& box_logits,
                                                       const Tensor<T>& memory,
                                                       std::span<const unsigned char> active) const {
  const int n = queries.rows();
  const int c = config_.channels;
  std::vector<LayerOutput<T>> out;
  Tensor<T> q = queries;
  Tensor<T> logits = box_logits;
  Tensor<T> boxes = nx::sigmoid(logits);
  for (int i = 0; i < layers(); ++i) {
    const auto& l = layers_[static_cast<std::size_t>(i)];
    const auto bv = boxes.values();
    const std::vector<double> b(bv.begin(), bv.end());
    const auto emb = box_sine_embedding(b, c);
    Tensor<T> sine({n, 2 * c}, std::vector<T>(emb.begin(), emb.end()));
    auto pq = pq_head_(sine);
    auto qp = nx::add(q, pq);
    q = l.ln1(nx::add(q, l.sa(qp, qp, active)));
    q = l.ln2(nx::add(q, l.ca(nx::add(q, pq), memory)));
    q = l.ln3(nx::add(q, l.mlp(q)));
    logits = nx::add(logits, l.box(q));
    boxes = nx::sigmoid(logits);
    out.push_back({Stage::kDeduplication, i, l.cls(q), logits, boxes});
  }
  return out;
}

template class BaselineDecoder<float>;
template class BaselineDecoder<double>;

}  // namespace dsdet::model
