// SPDX-License-Identifier: Apache-2.0
#include "scenediff/swin.hpp"

#include <map>
#include <tuple>

#include "scenediff/attention.hpp"
#include "scenediff/errors.hpp"

namespace scenediff {
namespace {

template <class Key, class Value, class Make>
Value cached(const Key& key, Make make) {
  thread_local std::map<Key, Value> cache;
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  Value v = make();
  cache.emplace(key, v);
  return v;
}

void check_grid(const Tensor& x, const char* op) {
  if (x.ndim() != 3) throw ShapeError(std::string(op) + ": expects [H, W, C], got " + shape_str(x.shape()));
}

// Effective window geometry for a square grid: windows larger than the grid
// shrink to the grid, and a single window never shifts.
WindowConfig effective_window(std::int64_t side, const SwinBlockConfig& c) {
  WindowConfig w{c.windowed ? std::min(c.window, side) : side, c.shift};
  if (w.window == side) w.shift = 0;
  if (side % w.window != 0)
    throw ShapeError("grid side " + std::to_string(side) + " not divisible by window " + std::to_string(w.window));
  return w;
}

// Region label per token of the rolled grid; tokens that were not neighbours
// before the roll carry different labels and must not attend to each other.
MaskPtr shift_mask(std::int64_t side, const WindowConfig& w, std::int64_t heads) {
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t>;
  return cached<Key, MaskPtr>(Key{side, w.window, w.shift, heads}, [&] {
    auto region = [&](std::int64_t p) { return p < side - w.window ? 0 : (p < side - w.shift ? 1 : 2); };
    const std::int64_t per_side = side / w.window, n = w.window * w.window;
    const std::int64_t num_windows = per_side * per_side;
    auto mask = std::make_shared<Mask>(static_cast<std::size_t>(num_windows * heads * n * n));
    for (std::int64_t win = 0; win < num_windows; ++win) {
      std::vector<std::int64_t> label(static_cast<std::size_t>(n));
      for (std::int64_t t = 0; t < n; ++t) {
        const std::int64_t r = (win / per_side) * w.window + t / w.window;
        const std::int64_t c = (win % per_side) * w.window + t % w.window;
        label[static_cast<std::size_t>(t)] = region(r) * 3 + region(c);
      }
      for (std::int64_t h = 0; h < heads; ++h)
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < n; ++j)
            (*mask)[static_cast<std::size_t>(((win * heads + h) * n + i) * n + j)] =
                label[static_cast<std::size_t>(i)] == label[static_cast<std::size_t>(j)];
    }
    return MaskPtr(mask);
  });
}

// Gather index from bias_table [heads, (2t-1)^2] to [heads, n, n]. Offsets
// beyond the table's reach (windows wider than the table) are clamped.
IndexPtr bias_index(std::int64_t window, std::int64_t table_window, std::int64_t heads) {
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  return cached<Key, IndexPtr>(Key{window, table_window, heads}, [&] {
    const std::int64_t n = window * window, span = 2 * table_window - 1, entries = span * span;
    auto idx = std::make_shared<Index>(static_cast<std::size_t>(heads * n * n));
    auto clampo = [&](std::int64_t d) { return std::clamp(d, -(table_window - 1), table_window - 1); };
    for (std::int64_t h = 0; h < heads; ++h)
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          const std::int64_t dy = clampo(i / window - j / window) + table_window - 1;
          const std::int64_t dx = clampo(i % window - j % window) + table_window - 1;
          (*idx)[static_cast<std::size_t>((h * n + i) * n + j)] = h * entries + dy * span + dx;
        }
    return IndexPtr(idx);
  });
}

}  // namespace

IndexPtr window_partition_index(std::int64_t height, std::int64_t width, std::int64_t channels,
                                const WindowConfig& cfg) {
  const std::int64_t w = cfg.window;
  if (w <= 0 || height % w != 0 || width % w != 0)
    throw ShapeError("grid " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by window " +
                     std::to_string(w));
  if (cfg.shift < 0 || cfg.shift >= w) throw ShapeError("window shift must lie in [0, window)");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, std::int64_t>;
  return cached<Key, IndexPtr>(Key{height, width, channels, w, cfg.shift}, [&] {
    auto idx = std::make_shared<Index>(static_cast<std::size_t>(height * width * channels));
    const std::int64_t per_row = width / w;
    std::size_t o = 0;
    for (std::int64_t win = 0; win < (height / w) * per_row; ++win)
      for (std::int64_t t = 0; t < w * w; ++t) {
        const std::int64_t r = ((win / per_row) * w + t / w + cfg.shift) % height;
        const std::int64_t c = ((win % per_row) * w + t % w + cfg.shift) % width;
        for (std::int64_t ch = 0; ch < channels; ++ch) (*idx)[o++] = (r * width + c) * channels + ch;
      }
    return IndexPtr(idx);
  });
}

Tensor window_partition(const Tensor& x, const WindowConfig& cfg) {
  check_grid(x, "window_partition");
  const auto h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  auto idx = window_partition_index(h, w, c, cfg);
  return gather(x, idx, {(h / cfg.window) * (w / cfg.window), cfg.window * cfg.window, c});
}

Tensor window_reverse(const Tensor& windows, std::int64_t height, std::int64_t width, const WindowConfig& cfg) {
  const auto c = windows.shape().back();
  if (windows.numel() != height * width * c) throw ShapeError("window_reverse: element count mismatch");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, std::int64_t>;
  auto inv = cached<Key, IndexPtr>(Key{height, width, c, cfg.window, cfg.shift}, [&] {
    auto fwd = window_partition_index(height, width, c, cfg);
    auto idx = std::make_shared<Index>(fwd->size());
    for (std::size_t i = 0; i < fwd->size(); ++i) (*idx)[static_cast<std::size_t>((*fwd)[i])] = static_cast<std::int64_t>(i);
    return IndexPtr(idx);
  });
  return gather(windows, inv, {height, width, c});
}

CosineAttention cosine_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& tau,
                                 const Tensor& bias, const MaskPtr& mask) {
  if (q.ndim() != 4 || k.shape() != q.shape() || v.shape() != q.shape())
    throw ShapeError("cosine_attention: q, k, v must share shape [batch, heads, N, dh]");
  const auto heads = q.shape()[1], n = q.shape()[2];
  if (tau.numel() != heads || bias.shape() != Shape{heads, n, n})
    throw ShapeError("cosine_attention: tau/bias do not match heads and window");
  Tensor logits = bmm_nt(l2_normalize(q), l2_normalize(k));
  logits = mul_bcast(logits, recip(tau), 1);
  logits = add_bcast(logits, bias, 1);
  CosineAttention out;
  out.weights = mask ? softmax_masked(logits, mask) : softmax(logits);
  out.out = bmm(out.weights, v);
  return out;
}

SwinBlock::SwinBlock(ParamStore& store, const std::string& path, const SwinBlockConfig& config, Rng& rng)
    : config_(config) {
  if (config.dim % config.heads != 0) throw ShapeError("swin block: dim not divisible by heads");
  if (config.shift < 0 || config.shift >= config.window) throw ShapeError("swin block: shift must lie in [0, window)");
  const auto d = config.dim;
  qkv = nn::Linear(store, path + ".qkv", d, 3 * d, rng);
  proj = nn::Linear(store, path + ".proj", d, d, rng);
  tau = store.add(path + ".tau", Tensor::full({config.heads}, kTauInit));
  const auto span = 2 * config.window - 1;
  bias_table = store.add(path + ".rel_bias", init::normal(rng, {config.heads, span * span}, 0.02));
  norm_attn = nn::LayerNorm(store, path + ".norm_attn", d);
  norm_mlp = nn::LayerNorm(store, path + ".norm_mlp", d);
  mlp = nn::Mlp(store, path + ".mlp", d, config.mlp_ratio * d, d, rng);
}

Tensor SwinBlock::attention(const Tensor& z) const {
  check_grid(z, "swin block");
  const auto h = z.shape()[0], w = z.shape()[1], c = z.shape()[2];
  if (h != w) throw ShapeError("swin block expects a square grid, got " + shape_str(z.shape()));
  if (c != config_.dim) throw ShapeError("swin block expects " + std::to_string(config_.dim) + " channels");
  const WindowConfig win = effective_window(h, config_);
  const auto n = win.window * win.window, nw = (h / win.window) * (w / win.window), heads = config_.heads;

  Tensor windows = window_partition(qkv(z), win);  // [nw, n, 3C]
  Tensor q = attention::split_heads(narrow_last(windows, 0, c), nw, heads);
  Tensor k = attention::split_heads(narrow_last(windows, c, c), nw, heads);
  Tensor v = attention::split_heads(narrow_last(windows, 2 * c, c), nw, heads);
  Tensor bias = gather(bias_table, bias_index(win.window, config_.window, heads), {heads, n, n});
  MaskPtr mask = win.shift > 0 ? shift_mask(h, win, heads) : nullptr;
  Tensor out = cosine_attention(q, k, v, tau, bias, mask).out;
  return proj(window_reverse(attention::merge_heads(out), h, w, win));
}

Tensor SwinBlock::forward(const Tensor& z) const {
  Tensor z_hat = add(norm_attn(attention(z)), z);
  return add(mlp(norm_mlp(z_hat)), z_hat);
}

PatchMerge::PatchMerge(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng) {
  norm = nn::LayerNorm(store, path + ".norm", 4 * dim);
  reduction = nn::Linear(store, path + ".reduction", 4 * dim, 2 * dim, rng, false);
}

Tensor PatchMerge::forward(const Tensor& x) const {
  check_grid(x, "patch_merge");
  const auto h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (h % 2 || w % 2) throw ShapeError("patch_merge needs even extents, got " + shape_str(x.shape()));
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  auto idx = cached<Key, IndexPtr>(Key{h, w, c}, [&] {
    auto out = std::make_shared<Index>(static_cast<std::size_t>(h * w * c));
    std::size_t o = 0;
    // neighbourhood order: (0,0), (1,0), (0,1), (1,1)
    for (std::int64_t i = 0; i < h / 2; ++i)
      for (std::int64_t j = 0; j < w / 2; ++j)
        for (std::int64_t q = 0; q < 4; ++q) {
          const std::int64_t r = 2 * i + q % 2, col = 2 * j + q / 2;
          for (std::int64_t ch = 0; ch < c; ++ch) (*out)[o++] = (r * w + col) * c + ch;
        }
    return IndexPtr(out);
  });
  return reduction(norm(gather(x, idx, {h / 2, w / 2, 4 * c})));
}

PatchExpand::PatchExpand(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng) {
  if (dim % 2) throw ShapeError("patch_expand needs an even channel count");
  expand = nn::Linear(store, path + ".expand", dim, 2 * dim, rng);
}

Tensor PatchExpand::forward(const Tensor& x) const {
  check_grid(x, "patch_expand");
  const auto h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (c % 2) throw ShapeError("patch_expand needs an even channel count, got " + shape_str(x.shape()));
  const auto half = c / 2;
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  auto idx = cached<Key, IndexPtr>(Key{h, w, c}, [&] {
    auto out = std::make_shared<Index>(static_cast<std::size_t>(4 * h * w * half));
    std::size_t o = 0;
    for (std::int64_t r = 0; r < 2 * h; ++r)
      for (std::int64_t col = 0; col < 2 * w; ++col)
        for (std::int64_t ch = 0; ch < half; ++ch)
          (*out)[o++] = ((r / 2) * w + col / 2) * (2 * c) + ((r % 2) * 2 + col % 2) * half + ch;
    return IndexPtr(out);
  });
  return gather(expand(x), idx, {2 * h, 2 * w, half});
}

}  // namespace scenediff
