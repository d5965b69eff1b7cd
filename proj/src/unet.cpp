// SPDX-License-Identifier: Apache-2.0
#include "scenediff/unet.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "scenediff/attention.hpp"
#include "scenediff/errors.hpp"

namespace scenediff {

ConditionAdapters::ConditionAdapters(ParamStore& store, const std::string& path, std::int64_t d_text,
                                     std::int64_t d_graph, std::int64_t d_cond, Rng& rng)
    : text(store, path + ".text", d_text, d_cond, rng),
      object(store, path + ".object", d_graph, d_cond, rng),
      relation(store, path + ".relation", d_graph, d_cond, rng) {}

ConditionalEmbeddings build_conditional_embeddings(const ConditionAdapters& adapters, const TextEmbeddings& text,
                                                   const GraphEmbeddings* graph, bool graph_visible) {
  ConditionalEmbeddings out;
  std::vector<Tensor> parts{adapters.text(text.seq)};
  out.mask = text.mask;
  out.text_rows = text.seq.shape()[0];
  if (graph != nullptr) {
    const std::uint8_t vis = graph_visible ? 1 : 0;
    out.object_rows = graph->nodes.shape()[0];
    parts.push_back(adapters.object(graph->nodes));
    out.mask.insert(out.mask.end(), static_cast<std::size_t>(out.object_rows), vis);
    if (graph->num_edges() > 0) {
      out.relation_rows = graph->num_edges();
      parts.push_back(adapters.relation(graph->edges));
      out.mask.insert(out.mask.end(), static_cast<std::size_t>(out.relation_rows), vis);
    }
  }
  out.seq = parts.size() == 1 ? parts[0] : concat_rows(parts);
  const auto rows = out.seq.shape()[0], d = out.seq.shape()[1];
  std::int64_t visible = 0;
  for (auto m : out.mask) visible += m ? 1 : 0;
  if (visible == 0) {
    out.pooled = Tensor::zeros({d});
  } else {
    std::vector<double> w(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < rows; ++i)
      w[static_cast<std::size_t>(i)] = out.mask[static_cast<std::size_t>(i)] ? 1.0 / static_cast<double>(visible) : 0.0;
    out.pooled = reshape(matmul(Tensor({1, rows}, std::move(w)), out.seq), {d});
  }
  return out;
}

TimestepEmbedding::TimestepEmbedding(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng)
    : mlp(store, path, dim, dim, dim, rng), dim_(dim) {}

Tensor TimestepEmbedding::operator()(std::int64_t t) const {
  std::vector<double> f(static_cast<std::size_t>(dim_));
  for (std::int64_t i = 0; i < dim_; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim_));
    const double angle = static_cast<double>(t) * freq;
    f[static_cast<std::size_t>(i)] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return mlp(Tensor({dim_}, std::move(f)));
}

CrossAttention::CrossAttention(ParamStore& store, const std::string& path, std::int64_t dim, std::int64_t d_cond,
                               std::int64_t heads, Rng& rng)
    : norm(store, path + ".norm", dim),
      q(store, path + ".q", dim, dim, rng),
      k(store, path + ".k", d_cond, dim, rng, false),
      v(store, path + ".v", d_cond, dim, rng),
      out(store, path + ".out", dim, dim, rng),
      heads_(heads) {}

Tensor CrossAttention::forward(const Tensor& x, const ConditionalEmbeddings& cond) const {
  const auto h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  Tensor tokens = reshape(x, {h * w, c});
  Tensor attended = attention::multi_head(q(norm(tokens)), k(cond.seq), v(cond.seq), heads_, &cond.mask);
  return reshape(out(attended), {h, w, c});
}

DBlock::DBlock(ParamStore& store, const std::string& path, const StageBlockConfig& config, Rng& rng)
    : cond_proj(store, path + ".cond_proj", config.d_cond, config.dim, rng),
      cross(store, path + ".cross", config.dim, config.d_cond, config.heads, rng) {
  if (config.num_block < 2) throw ConfigError("num_block must be at least 2");
  for (std::int64_t k = 0; k + 1 < config.num_block; ++k) {
    SwinBlockConfig sc;
    sc.dim = config.dim;
    sc.heads = config.heads;
    sc.window = config.window;
    sc.shift = ((config.first_shift_parity + k) % 2) * (config.window / 2);
    sc.mlp_ratio = config.mlp_ratio;
    sc.windowed = config.windowed;
    blocks.emplace_back(store, path + ".swin" + std::to_string(k), sc, rng);
  }
}

Tensor DBlock::forward(const Tensor& x, const ConditionalEmbeddings& cond, const Tensor& t_emb) const {
  if (x.ndim() != 3 || x.shape()[2] != cond_proj.out_features)
    throw ShapeError("dblock expects [H, W, " + std::to_string(cond_proj.out_features) + "], got " + shape_str(x.shape()));
  Tensor h = add_bcast(x, cond_proj(add(cond.pooled, t_emb)));
  h = add(h, cross.forward(h, cond));
  for (const auto& b : blocks) h = b.forward(h);
  return h;
}

UBlock::UBlock(ParamStore& store, const std::string& path, const StageBlockConfig& config, Rng& rng)
    : fuse(store, path + ".fuse", 2 * config.dim, config.dim, rng), body(store, path, config, rng) {}

Tensor UBlock::forward(const Tensor& x, const Tensor& skip, const ConditionalEmbeddings& cond,
                       const Tensor& t_emb) const {
  if (x.shape() != skip.shape())
    throw ShapeError("ublock: x " + shape_str(x.shape()) + " and skip " + shape_str(skip.shape()) + " differ");
  return body.forward(fuse(concat_last({x, skip})), cond, t_emb);
}

void UNetConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("unet: " + msg);
  };
  need(resolution > 0 && patch > 0 && resolution % patch == 0, "resolution must be a multiple of patch");
  need(merges >= 0 && grid() % (std::int64_t{1} << merges) == 0, "token grid not divisible by 2^merges");
  need(num_block >= 2, "num_block must be at least 2");
  need(blocks_per_stage >= 1, "blocks_per_stage must be at least 1");
  need(head_dim > 0 && base_dim % head_dim == 0, "base_dim must be a multiple of head_dim");
  need(window >= 1 && in_channels > 0 && out_channels > 0 && d_cond > 0 && timesteps > 0, "non-positive setting");
  for (std::int64_t s = 0; s <= merges; ++s) {
    const std::int64_t side = grid() >> s;
    need(side <= window || side % window == 0, "stage grid " + std::to_string(side) + " not divisible by window");
  }
}

namespace {

IndexPtr patch_index(std::int64_t res, std::int64_t p, std::int64_t c) {
  thread_local std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, IndexPtr> cache;
  const auto key = std::make_tuple(res, p, c);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const std::int64_t g = res / p;
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(res * res * c));
  std::size_t o = 0;
  for (std::int64_t i = 0; i < g; ++i)
    for (std::int64_t j = 0; j < g; ++j)
      for (std::int64_t a = 0; a < p; ++a)
        for (std::int64_t b = 0; b < p; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch) (*idx)[o++] = ((i * p + a) * res + j * p + b) * c + ch;
  cache.emplace(key, idx);
  return idx;
}

}  // namespace

Tensor patchify(const Tensor& image, std::int64_t patch) {
  const auto res = image.shape()[0], c = image.shape()[2];
  if (image.ndim() != 3 || image.shape()[1] != res || res % patch != 0)
    throw ShapeError("patchify: bad image shape " + shape_str(image.shape()));
  return gather(image, patch_index(res, patch, c), {res / patch, res / patch, patch * patch * c});
}

Tensor unpatchify(const Tensor& tokens, std::int64_t patch, std::int64_t channels) {
  const auto g = tokens.shape()[0], res = g * patch;
  if (tokens.ndim() != 3 || tokens.shape()[2] != patch * patch * channels)
    throw ShapeError("unpatchify: bad token shape " + shape_str(tokens.shape()));
  auto fwd = patch_index(res, patch, channels);
  thread_local std::map<const Index*, IndexPtr> inverse;
  auto it = inverse.find(fwd.get());
  if (it == inverse.end()) {
    auto inv = std::make_shared<Index>(fwd->size());
    for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[static_cast<std::size_t>((*fwd)[i])] = static_cast<std::int64_t>(i);
    it = inverse.emplace(fwd.get(), inv).first;
  }
  return gather(tokens, it->second, {res, res, channels});
}

UNet::UNet(ParamStore& store, const std::string& path, const UNetConfig& config, Rng& rng) : config_(config) {
  config.validate();
  const auto g = config.grid(), d0 = config.base_dim;
  patch_embed_ = nn::Linear(store, path + ".patch_embed", config.patch * config.patch * config.in_channels, d0, rng);
  pos_embed_ = store.add(path + ".pos_embed", init::normal(rng, {g, g, d0}, 0.02));
  time_ = TimestepEmbedding(store, path + ".time", config.d_cond, rng);

  auto stage_cfg = [&](std::int64_t s, std::int64_t parity) {
    StageBlockConfig c;
    c.dim = config.stage_dim(s);
    c.heads = c.dim / config.head_dim;
    c.d_cond = config.d_cond;
    c.window = config.window;
    c.mlp_ratio = config.mlp_ratio;
    c.windowed = config.windowed;
    c.num_block = config.num_block;
    c.first_shift_parity = parity;
    return c;
  };
  const std::int64_t swin_per_block = config.num_block - 1;
  std::vector<std::int64_t> parity(static_cast<std::size_t>(config.merges + 1), 0);  // shift alternation per stage
  for (std::int64_t s = 0; s <= config.merges; ++s) {
    auto& stage = encoder_.emplace_back();
    const std::string sp = path + (s < config.merges ? ".enc" + std::to_string(s) : std::string(".mid"));
    for (std::int64_t b = 0; b < config.blocks_per_stage; ++b) {
      stage.emplace_back(store, sp + ".block" + std::to_string(b), stage_cfg(s, parity[static_cast<std::size_t>(s)] % 2), rng);
      parity[static_cast<std::size_t>(s)] += swin_per_block;
    }
    if (s < config.merges) merge_.emplace_back(store, path + ".merge" + std::to_string(s), config.stage_dim(s), rng);
  }
  fuse_.resize(static_cast<std::size_t>(config.merges));
  decoder_.resize(static_cast<std::size_t>(config.merges));
  expand_.resize(static_cast<std::size_t>(config.merges));
  for (std::int64_t s = config.merges - 1; s >= 0; --s) {
    const auto i = static_cast<std::size_t>(s);
    const std::string sp = path + ".dec" + std::to_string(s);
    expand_[i] = PatchExpand(store, path + ".expand" + std::to_string(s), config.stage_dim(s + 1), rng);
    fuse_[i] = UBlock(store, sp + ".ublock", stage_cfg(s, parity[i] % 2), rng);
    parity[i] += swin_per_block;
    for (std::int64_t b = 1; b < config.blocks_per_stage; ++b) {
      decoder_[i].emplace_back(store, sp + ".block" + std::to_string(b), stage_cfg(s, parity[i] % 2), rng);
      parity[i] += swin_per_block;
    }
  }
  head_norm_ = nn::LayerNorm(store, path + ".head_norm", d0);
  head_ = nn::Linear(store, path + ".head", d0, config.patch * config.patch * config.out_channels, rng);
}

Tensor UNet::forward(const Tensor& z, std::int64_t t, const ConditionalEmbeddings& cond) const {
  const auto& c = config_;
  if (z.shape() != Shape{c.resolution, c.resolution, c.in_channels})
    throw ShapeError("unet expects input " + shape_str({c.resolution, c.resolution, c.in_channels}) + ", got " +
                     shape_str(z.shape()));
  if (t < 1 || t > c.timesteps)
    throw ShapeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(c.timesteps) + "]");
  if (cond.seq.shape()[1] != c.d_cond) throw ShapeError("conditioning width does not match d_cond");

  const Tensor t_emb = time_(t);
  Tensor x = add(patch_embed_(patchify(z, c.patch)), pos_embed_);
  std::vector<Tensor> skips;
  for (std::int64_t s = 0; s <= c.merges; ++s) {
    for (const auto& b : encoder_[static_cast<std::size_t>(s)]) x = b.forward(x, cond, t_emb);
    if (s < c.merges) {
      skips.push_back(x);
      x = merge_[static_cast<std::size_t>(s)].forward(x);
    }
  }
  for (std::int64_t s = c.merges - 1; s >= 0; --s) {
    const auto i = static_cast<std::size_t>(s);
    x = expand_[i].forward(x);
    x = fuse_[i].forward(x, skips[i], cond, t_emb);
    for (const auto& b : decoder_[i]) x = b.forward(x, cond, t_emb);
  }
  return unpatchify(head_(head_norm_(x)), c.patch, c.out_channels);
}

}  // namespace scenediff
