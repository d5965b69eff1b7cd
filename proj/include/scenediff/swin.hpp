// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "scenediff/nn.hpp"

namespace scenediff {

struct WindowConfig {
  std::int64_t window = 4;
  std::int64_t shift = 0;
};

// x: [H, W, C] -> [num_windows, w*w, C]. The grid is rolled by (-shift, -shift)
// and tiled row-major into w x w windows; tokens inside a window are row-major.
Tensor window_partition(const Tensor& x, const WindowConfig& cfg);
// Exact inverse of window_partition.
Tensor window_reverse(const Tensor& windows, std::int64_t height, std::int64_t width, const WindowConfig& cfg);
// Flat source index of every element of window_partition's output.
IndexPtr window_partition_index(std::int64_t height, std::int64_t width, std::int64_t channels,
                                const WindowConfig& cfg);

struct CosineAttention {
  Tensor out;      // [..., N, dh]
  Tensor weights;  // [..., N, N]
};

// softmax(cos(q_i, k_j) / tau + bias_ij) v over the last two axes.
// q, k, v: [batch, heads, N, dh]; tau: [heads]; bias: [heads, N, N];
// mask (optional): batch * heads * N * N entries, nonzero = attend.
CosineAttention cosine_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& tau,
                                 const Tensor& bias, const MaskPtr& mask = nullptr);

struct SwinBlockConfig {
  std::int64_t dim = 32;
  std::int64_t heads = 4;
  std::int64_t window = 4;
  std::int64_t shift = 0;
  std::int64_t mlp_ratio = 4;
  // false: one window spanning the whole grid (plain transformer block).
  bool windowed = true;
};

inline constexpr double kTauInit = 0.1;
inline constexpr double kTauMin = 0.01;

// z_hat = LN(Attn(z)) + z;  z' = MLP(LN(z_hat)) + z_hat.
// Attention is multi-head scaled cosine attention inside (shifted) windows
// with a learned relative position bias table per head.
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(ParamStore& store, const std::string& path, const SwinBlockConfig& config, Rng& rng);

  Tensor forward(const Tensor& z) const;  // [H, W, C] -> [H, W, C]
  Tensor attention(const Tensor& z) const;

  const SwinBlockConfig& config() const { return config_; }

  nn::Linear qkv;
  nn::Linear proj;
  Tensor tau;         // [heads]
  Tensor bias_table;  // [heads, (2w-1)^2]
  nn::LayerNorm norm_attn;
  nn::LayerNorm norm_mlp;
  nn::Mlp mlp;

 private:
  SwinBlockConfig config_;
};

// [H, W, C] -> [H/2, W/2, 2C]: each 2x2 neighbourhood concatenated to 4C,
// normalized, then mapped linearly to 2C.
class PatchMerge {
 public:
  PatchMerge() = default;
  PatchMerge(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng);
  Tensor forward(const Tensor& x) const;

  nn::LayerNorm norm;
  nn::Linear reduction;
};

// [H, W, C] -> [2H, 2W, C/2]: linear C -> 2C, then the 2C channels are laid
// out as a 2x2 block: out[2i+a, 2j+b, c] = y[i, j, (2a+b) * C/2 + c].
class PatchExpand {
 public:
  PatchExpand() = default;
  PatchExpand(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng);
  Tensor forward(const Tensor& x) const;

  nn::Linear expand;
};

}  // namespace scenediff
