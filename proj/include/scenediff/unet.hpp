// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "scenediff/graphconv.hpp"
#include "scenediff/swin.hpp"
#include "scenediff/textenc.hpp"

namespace scenediff {

// Text, object, and relation rows (in that order) projected to d_cond.
struct ConditionalEmbeddings {
  Tensor seq;     // [L, d_cond]
  Mask mask;      // L entries, 1 = visible to cross-attention
  Tensor pooled;  // [d_cond], mean of the visible rows (zeros if none)
  std::int64_t text_rows = 0;
  std::int64_t object_rows = 0;
  std::int64_t relation_rows = 0;
};

// Per-segment linear maps into the shared conditioning width.
struct ConditionAdapters {
  nn::Linear text;
  nn::Linear object;
  nn::Linear relation;

  ConditionAdapters() = default;
  ConditionAdapters(ParamStore& store, const std::string& path, std::int64_t d_text, std::int64_t d_graph,
                    std::int64_t d_cond, Rng& rng);
};

// `graph` may be null (no graph rows). With graph_visible == false the graph
// rows are still present but masked out, which removes them from the pooled
// vector and from every cross-attention.
ConditionalEmbeddings build_conditional_embeddings(const ConditionAdapters& adapters, const TextEmbeddings& text,
                                                   const GraphEmbeddings* graph, bool graph_visible = true);

// features(t)[2i] = sin(t / 10000^(2i/d)), [2i+1] = cos(...), then an MLP.
class TimestepEmbedding {
 public:
  TimestepEmbedding() = default;
  TimestepEmbedding(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng);
  Tensor operator()(std::int64_t t) const;  // [dim]

  nn::Mlp mlp;

 private:
  std::int64_t dim_ = 0;
};

// Image tokens (queries, layer-normalized) attend over cond.seq (masked).
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(ParamStore& store, const std::string& path, std::int64_t dim, std::int64_t d_cond,
                 std::int64_t heads, Rng& rng);
  Tensor forward(const Tensor& x, const ConditionalEmbeddings& cond) const;  // [H, W, C]

  nn::LayerNorm norm;
  nn::Linear q, k, v, out;  // k has no bias: it cannot change the softmax

 private:
  std::int64_t heads_ = 1;
};

struct StageBlockConfig {
  std::int64_t dim = 32;
  std::int64_t heads = 4;
  std::int64_t d_cond = 64;
  std::int64_t window = 4;
  std::int64_t mlp_ratio = 4;
  bool windowed = true;
  std::int64_t num_block = 2;  // one cross-attention + (num_block - 1) swin blocks
  std::int64_t first_shift_parity = 0;
};

// x + proj(pooled + t_emb) broadcast over tokens, residual cross-attention,
// then num_block - 1 swin blocks with alternating shifts.
class DBlock {
 public:
  DBlock() = default;
  DBlock(ParamStore& store, const std::string& path, const StageBlockConfig& config, Rng& rng);
  Tensor forward(const Tensor& x, const ConditionalEmbeddings& cond, const Tensor& t_emb) const;

  nn::Linear cond_proj;
  CrossAttention cross;
  std::vector<SwinBlock> blocks;
};

// Linear fusion of concat[x, skip] (2C -> C), then a DBlock body.
class UBlock {
 public:
  UBlock() = default;
  UBlock(ParamStore& store, const std::string& path, const StageBlockConfig& config, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& skip, const ConditionalEmbeddings& cond, const Tensor& t_emb) const;

  nn::Linear fuse;
  DBlock body;
};

enum class PredictionTarget { kEpsilon, kX0 };

struct UNetConfig {
  std::int64_t resolution = 8;
  std::int64_t patch = 1;
  std::int64_t in_channels = 3;
  std::int64_t out_channels = 3;
  std::int64_t base_dim = 32;  // stage s has base_dim * 2^s channels
  std::int64_t merges = 2;
  std::int64_t num_block = 2;
  std::int64_t blocks_per_stage = 1;  // DBlocks per encoder stage (mirrored in the decoder)
  std::int64_t head_dim = 8;
  std::int64_t window = 4;
  std::int64_t mlp_ratio = 4;
  std::int64_t d_cond = 64;
  std::int64_t timesteps = 1000;  // valid t is [1, timesteps]
  bool windowed = true;
  PredictionTarget target = PredictionTarget::kEpsilon;

  std::int64_t grid() const { return resolution / patch; }
  std::int64_t stage_dim(std::int64_t s) const { return base_dim << s; }
  // Throws ConfigError when the geometry is inconsistent.
  void validate() const;
};

// Patch embedding + learned absolute positions, encoder stages of DBlocks
// separated by patch merging, a bottleneck stage, decoder stages that expand
// and fuse the mirror encoder output through a UBlock, then a linear head
// back to pixels.
class UNet {
 public:
  UNet() = default;
  UNet(ParamStore& store, const std::string& path, const UNetConfig& config, Rng& rng);

  // z: [R, R, in_channels] -> [R, R, out_channels]
  Tensor forward(const Tensor& z, std::int64_t t, const ConditionalEmbeddings& cond) const;
  const UNetConfig& config() const { return config_; }

 private:
  UNetConfig config_;
  nn::Linear patch_embed_;
  Tensor pos_embed_;
  TimestepEmbedding time_;
  std::vector<std::vector<DBlock>> encoder_;  // [merges + 1]; the last is the bottleneck
  std::vector<PatchMerge> merge_;             // [merges]
  std::vector<PatchExpand> expand_;           // [merges]
  std::vector<UBlock> fuse_;                  // [merges], indexed by stage
  std::vector<std::vector<DBlock>> decoder_;  // [merges], extra blocks after each UBlock
  nn::LayerNorm head_norm_;
  nn::Linear head_;
};

// Rearrangements between images and patch-token grids.
// [R, R, c] -> [R/p, R/p, p*p*c]; channel (a*p + b)*c + ch holds pixel (i*p + a, j*p + b).
Tensor patchify(const Tensor& image, std::int64_t patch);
Tensor unpatchify(const Tensor& tokens, std::int64_t patch, std::int64_t channels);

}  // namespace scenediff
