// SPDX-License-Identifier: Apache-2.0

#include "dsdet/numerics/attention.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "dsdet/kernels/kernels.hpp"

namespace dsdet::numerics {

using kernels::Trans;

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                               std::span<const unsigned char> key_mask) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) throw DimensionError("attention: expected 2-D inputs");
  const int nq = q.rows(), nk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != nk)
    throw DimensionError("attention: q/k/v shapes " + shape_string(q.shape()) + " " + shape_string(k.shape()) + " " +
                         shape_string(v.shape()));
  if (heads <= 0 || d % heads != 0) throw DimensionError("attention: width not divisible by heads");
  if (!key_mask.empty() && static_cast<int>(key_mask.size()) != nk)
    throw DimensionError("attention: key mask length mismatch");

  const int dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  const auto& kt = kernels::active<T>();
  auto mask = std::make_shared<std::vector<unsigned char>>(key_mask.begin(), key_mask.end());
  const unsigned char* mptr = mask->empty() ? nullptr : mask->data();

  // probs[h] is nq x nk
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(heads) * nq * nk);
  std::vector<T> scores(static_cast<std::size_t>(nq) * nk);
  std::vector<T> out(static_cast<std::size_t>(nq) * d);
  const T* qv = q.values().data();
  const T* kv = k.values().data();
  const T* vv = v.values().data();
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    kt.gemm(Trans::kNo, Trans::kYes, nq, nk, dh, qv + off, d, kv + off, d, scores.data(), nk, false);
    for (auto& s : scores) s *= sc;
    T* ph = probs->data() + static_cast<std::size_t>(h) * nq * nk;
    kt.softmax_rows(nq, nk, scores.data(), nk, ph, nk, mptr);
    kt.gemm(Trans::kNo, Trans::kNo, nq, dh, nk, ph, nk, vv + off, d, out.data() + off, d, false);
  }

  return make_result<T>({nq, d}, std::move(out), {q, k, v}, [=](detail::Node<T>& self) {
    const auto& kt = kernels::active<T>();
    auto* pq = self.parents[0]->requires_grad ? self.parents[0].get() : nullptr;
    auto* pk = self.parents[1]->requires_grad ? self.parents[1].get() : nullptr;
    auto* pv = self.parents[2]->requires_grad ? self.parents[2].get() : nullptr;
    const T* qv = self.parents[0]->value.data();
    const T* kv = self.parents[1]->value.data();
    const T* vv = self.parents[2]->value.data();
    const T* g = self.grad.data();
    std::vector<T> dp(static_cast<std::size_t>(nq) * nk);
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      const T* ph = probs->data() + static_cast<std::size_t>(h) * nq * nk;
      if (pv) kt.gemm(Trans::kYes, Trans::kNo, nk, dh, nq, ph, nk, g + off, d, pv->grad.data() + off, d, true);
      if (!pq && !pk) continue;
      kt.gemm(Trans::kNo, Trans::kYes, nq, nk, dh, g + off, d, vv + off, d, dp.data(), nk, false);
      for (int i = 0; i < nq; ++i) {
        T* dr = dp.data() + static_cast<std::size_t>(i) * nk;
        const T* pr = ph + static_cast<std::size_t>(i) * nk;
        const T rowdot = kt.dot(static_cast<std::size_t>(nk), dr, pr);
        for (int j = 0; j < nk; ++j) dr[j] = pr[j] * (dr[j] - rowdot) * sc;
      }
      if (pq) kt.gemm(Trans::kNo, Trans::kNo, nq, dh, nk, dp.data(), nk, kv + off, d, pq->grad.data() + off, d, true);
      if (pk) kt.gemm(Trans::kYes, Trans::kNo, nk, dh, nq, dp.data(), nk, qv + off, d, pk->grad.data() + off, d, true);
    }
  });
}

template Tensor<float> multi_head_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, int,
                                            std::span<const unsigned char>);
template Tensor<double> multi_head_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, int,
                                             std::span<const unsigned char>);

}  // namespace dsdet::numerics
