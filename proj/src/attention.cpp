// SPDX-License-Identifier: Apache-2.0
#include "scenediff/attention.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "scenediff/errors.hpp"
#include "scenediff/ops.hpp"

namespace scenediff::attention {
namespace {

using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, bool>;

// out[b, h, l, d] = in[b, l, h * dh + d] (split) or its inverse (merge).
IndexPtr head_index(std::int64_t batch, std::int64_t len, std::int64_t heads, std::int64_t dh, bool split) {
  thread_local std::map<Key, IndexPtr> cache;
  const Key key{batch, len, heads, dh, split};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(batch * len * heads * dh));
  const std::int64_t c = heads * dh;
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t h = 0; h < heads; ++h)
      for (std::int64_t l = 0; l < len; ++l)
        for (std::int64_t d = 0; d < dh; ++d) {
          const std::int64_t packed = ((b * heads + h) * len + l) * dh + d;
          const std::int64_t flat = (b * len + l) * c + h * dh + d;
          if (split)
            (*idx)[static_cast<std::size_t>(packed)] = flat;
          else
            (*idx)[static_cast<std::size_t>(flat)] = packed;
        }
  cache.emplace(key, idx);
  return idx;
}

}  // namespace

Tensor split_heads(const Tensor& x, std::int64_t batch, std::int64_t heads) {
  const std::int64_t c = x.shape().back();
  if (c % heads != 0) throw ShapeError("split_heads: channels not divisible by heads");
  const std::int64_t len = x.numel() / (batch * c);
  const std::int64_t dh = c / heads;
  return gather(x, head_index(batch, len, heads, dh, true), {batch, heads, len, dh});
}

Tensor merge_heads(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("merge_heads: expects [batch, heads, L, dh]");
  const auto batch = x.shape()[0], heads = x.shape()[1], len = x.shape()[2], dh = x.shape()[3];
  return gather(x, head_index(batch, len, heads, dh, false), {batch, len, heads * dh});
}

Tensor multi_head(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t heads, const Mask* key_mask) {
  const auto lq = q.shape()[0], lk = k.shape()[0], c = q.shape().back();
  if (k.shape().back() != c || v.shape() != k.shape()) throw ShapeError("multi_head: q/k/v width mismatch");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(c / heads));
  Tensor qh = split_heads(q, 1, heads);
  Tensor kh = split_heads(k, 1, heads);
  Tensor vh = split_heads(v, 1, heads);
  Tensor logits = scale(bmm_nt(qh, kh), inv_sqrt);
  Tensor weights;
  if (key_mask != nullptr) {
    if (static_cast<std::int64_t>(key_mask->size()) != lk) throw ShapeError("multi_head: key mask length");
    auto full = std::make_shared<Mask>(static_cast<std::size_t>(heads * lq * lk));
    for (std::int64_t r = 0; r < heads * lq; ++r)
      for (std::int64_t j = 0; j < lk; ++j) (*full)[static_cast<std::size_t>(r * lk + j)] = (*key_mask)[static_cast<std::size_t>(j)];
    weights = softmax_masked(logits, full);
  } else {
    weights = softmax(logits);
  }
  return reshape(merge_heads(bmm(weights, vh)), {lq, c});
}

}  // namespace scenediff::attention
