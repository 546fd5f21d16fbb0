// SPDX-License-Identifier: Apache-2.0
//
// Conventional decoder used as the speed reference: every layer runs
// self-attention, cross-attention and a feed-forward block, with a positional
// query recomputed from the current box at each layer.

#pragma once

#include <span>
#include <vector>

#include "dsdet/model/config.hpp"
#include "dsdet/model/detector.hpp"
#include "dsdet/numerics/nn.hpp"

namespace dsdet::model {

// Sine embedding of (cx, cy, w, h): [N x 2C], C/2 features per coordinate.
std::vector<double> box_sine_embedding(std::span<const double> boxes, int channels);

template <typename T>
class BaselineDecoder {
 public:
  // Width, heads, MLP width and class count come from config.
  BaselineDecoder(const DetectorConfig& config, int layers = 6);

  int layers() const { return static_cast<int>(layers_.size()); }
  const numerics::ParameterStore<T>& parameters() const { return store_; }

  std::vector<LayerOutput<T>> decode(const Tensor<T>& queries, const Tensor<T>& box_logits, const Tensor<T>& memory,
                                     std::span<const unsigned char> active) const;

 private:
  struct Layer {
    numerics::Attention<T> sa;
    numerics::LayerNorm<T> ln1;
    numerics::Attention<T> ca;
    numerics::LayerNorm<T> ln2;
    numerics::Mlp<T> mlp;
    numerics::LayerNorm<T> ln3;
    numerics::Linear<T> cls;
    numerics::Mlp<T> box;
  };

  DetectorConfig config_;
  numerics::ParameterStore<T> store_;
  numerics::Mlp<T> pq_head_;
  std::vector<Layer> layers_;
};

extern template class BaselineDecoder<float>;
extern template class BaselineDecoder<double>;

}  // namespace dsdet::model
