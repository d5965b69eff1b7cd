// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "scenediff/tensor.hpp"

// Differentiable primitives. All reductions run sequentially in increasing
// flat index; matrix products follow the order documented in kernels.hpp.
namespace scenediff {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

// b broadcasts over x: x is viewed as [outer, b.numel(), inner] where the
// block of b's axes starts at `axis` (default: b aligned to x's trailing axes).
Tensor add_bcast(const Tensor& x, const Tensor& b, std::int64_t axis = -1);
Tensor mul_bcast(const Tensor& x, const Tensor& b, std::int64_t axis = -1);
Tensor recip(const Tensor& x);

// a: [..., m, k] (leading axes flattened into rows), b: [k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched: a [batch..., m, k], b [batch..., k, n] with equal batch extents.
Tensor bmm(const Tensor& a, const Tensor& b);
// Batched a * b^T: a [batch..., m, k], b [batch..., n, k].
Tensor bmm_nt(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
// out.flat[i] = x.flat[(*index)[i]]; indices may repeat (gradients sum).
Tensor gather(const Tensor& x, const IndexPtr& index, Shape out_shape);
// Rows of a [V, d] table.
Tensor take_rows(const Tensor& table, const std::vector<std::int64_t>& rows);
Tensor transpose2d(const Tensor& x);

// Concatenate along axis 0 (trailing shapes equal) or the last axis
// (leading shapes equal).
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_last(const std::vector<Tensor>& parts);
// Contiguous slice [start, start + len) of the last axis.
Tensor narrow_last(const Tensor& x, std::int64_t start, std::int64_t len);

Tensor softmax(const Tensor& x);
// mask has x.numel() entries, nonzero = keep. Masked entries get exactly zero
// weight; a fully masked row produces all zeros.
Tensor softmax_masked(const Tensor& x, const MaskPtr& mask);

// Normalizes the last axis: (x - mean) / sqrt(var + eps) * gain + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Exact-erf GELU: x * Phi(x).
Tensor gelu(const Tensor& x);

// Each last-axis row divided by sqrt(sum(x^2) + eps).
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean of squared differences over every element.
Tensor mse(const Tensor& prediction, const Tensor& target);
// logits [n, classes]; mean negative log-likelihood of labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);

}  // namespace scenediff
