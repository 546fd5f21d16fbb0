// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "dsdet/numerics/tensor.hpp"

namespace dsdet::numerics {

// Scaled dot-product attention split over `heads` column groups.
//   q: [nq x d], k: [nk x d], v: [nk x d]  ->  [nq x d]
// key_mask (optional, length nk): zero entries are excluded from every
// softmax. A row whose keys are all masked yields zeros.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                               std::span<const unsigned char> key_mask = {});

}  // namespace dsdet::numerics
