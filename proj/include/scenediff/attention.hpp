// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "scenediff/tensor.hpp"

namespace scenediff::attention {

// [batch, L, heads * dh] -> [batch, heads, L, dh]
Tensor split_heads(const Tensor& x, std::int64_t batch, std::int64_t heads);
// [batch, heads, L, dh] -> [batch, L, heads * dh]
Tensor merge_heads(const Tensor& x);

// Standard scaled dot-product multi-head attention of q [Lq, C] over
// k, v [Lk, C]. key_mask (Lk entries, nonzero = attend) may be null.
// Returns [Lq, C] with heads concatenated.
Tensor multi_head(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t heads, const Mask* key_mask);

}  // namespace scenediff::attention
