// SPDX-License-Identifier: Apache-2.0
#include "scenediff/gradsuite.hpp"

#include <functional>

#include "scenediff/gradcheck.hpp"
#include "scenediff/ops.hpp"
#include "scenediff/unet.hpp"

namespace scenediff {
namespace {

constexpr double kLayerTol = 1e-4;
constexpr double kEndToEndTol = 1e-3;

Tensor randn(Rng& rng, const Shape& shape, bool requires_grad = false) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor(shape, std::move(v), requires_grad);
}

ConditionalEmbeddings random_cond(Rng& rng, std::int64_t rows, std::int64_t d, const Mask& mask) {
  ConditionalEmbeddings c;
  c.seq = randn(rng, {rows, d}, true);
  c.mask = mask;
  c.text_rows = rows;
  c.pooled = randn(rng, {d}, true);
  return c;
}

LayerGradCheck check(const std::string& layer, const std::function<Tensor()>& loss,
                     const std::vector<std::pair<std::string, Tensor>>& tensors, std::int64_t max_entries,
                     std::uint64_t seed, double tol = kLayerTol) {
  GradCheckOptions opt;
  opt.max_entries = max_entries;
  opt.seed = seed;
  const auto report = grad_check(loss, tensors, opt);
  return {layer, report.max_rel_error, tol, report.worst};
}

StageBlockConfig stage_config() {
  StageBlockConfig c;
  c.dim = 4;
  c.heads = 2;
  c.d_cond = 4;
  c.window = 2;
  c.mlp_ratio = 2;
  c.num_block = 3;
  return c;
}

}  // namespace

std::vector<LayerGradCheck> gradient_suite(std::uint64_t seed) {
  std::vector<LayerGradCheck> out;
  Rng rng(seed);

  {
    Tensor x = randn(rng, {3, 6}, true), g = randn(rng, {6}, true), b = randn(rng, {6}, true);
    const Tensor w = randn(rng, {3, 6});
    out.push_back(check("layer_norm", [&] { return sum(mul(layer_norm(x, g, b), w)); },
                        {{"x", x}, {"gain", g}, {"bias", b}}, 0, seed));
  }
  {
    Tensor x = randn(rng, {4, 5}, true);
    const Tensor w = randn(rng, {4, 5});
    out.push_back(check("gelu", [&] { return sum(mul(gelu(x), w)); }, {{"x", x}}, 0, seed));
  }
  {
    Tensor q = randn(rng, {2, 2, 4, 3}, true), k = randn(rng, {2, 2, 4, 3}, true), v = randn(rng, {2, 2, 4, 3}, true);
    Tensor tau = Tensor({2}, {0.5, 0.8}, true);
    Tensor bias = randn(rng, {2, 4, 4}, true);
    const Tensor w = randn(rng, {2, 2, 4, 3});
    out.push_back(check("cosine_attention", [&] { return sum(mul(cosine_attention(q, k, v, tau, bias).out, w)); },
                        {{"q", q}, {"k", k}, {"v", v}, {"tau", tau}, {"bias", bias}}, 0, seed));
  }
  for (std::int64_t shift : {0, 1}) {
    ParamStore store;
    SwinBlockConfig c;
    c.dim = 4;
    c.heads = 2;
    c.window = 2;
    c.shift = shift;
    c.mlp_ratio = 2;
    SwinBlock block(store, "swin", c, rng);
    Tensor z = randn(rng, {4, 4, 4}, true);
    const Tensor w = randn(rng, {4, 4, 4});
    auto tensors = store.trainable();
    tensors.emplace_back("z", z);
    out.push_back(check(shift ? "swin_block (shifted)" : "swin_block", [&] { return sum(mul(block.forward(z), w)); },
                        tensors, 16, seed));
  }
  {
    ParamStore store;
    PatchMerge merge(store, "merge", 2, rng);
    Tensor x = randn(rng, {4, 4, 2}, true);
    const Tensor w = randn(rng, {2, 2, 4});
    auto tensors = store.trainable();
    tensors.emplace_back("x", x);
    out.push_back(check("patch_merge", [&] { return sum(mul(merge.forward(x), w)); }, tensors, 0, seed));
  }
  {
    ParamStore store;
    PatchExpand expand(store, "expand", 4, rng);
    Tensor x = randn(rng, {2, 2, 4}, true);
    const Tensor w = randn(rng, {4, 4, 2});
    auto tensors = store.trainable();
    tensors.emplace_back("x", x);
    out.push_back(check("patch_expand", [&] { return sum(mul(expand.forward(x), w)); }, tensors, 0, seed));
  }
  {
    ParamStore store;
    DBlock block(store, "dblock", stage_config(), rng);
    Tensor x = randn(rng, {4, 4, 4}, true), t_emb = randn(rng, {4}, true);
    const ConditionalEmbeddings cond = random_cond(rng, 3, 4, {1, 0, 1});
    const Tensor w = randn(rng, {4, 4, 4});
    auto tensors = store.trainable();
    tensors.insert(tensors.end(), {{"x", x}, {"t_emb", t_emb}, {"cond.seq", cond.seq}, {"cond.pooled", cond.pooled}});
    out.push_back(check("dblock", [&] { return sum(mul(block.forward(x, cond, t_emb), w)); }, tensors, 12, seed));
  }
  {
    ParamStore store;
    UBlock block(store, "ublock", stage_config(), rng);
    Tensor x = randn(rng, {4, 4, 4}, true), skip = randn(rng, {4, 4, 4}, true), t_emb = randn(rng, {4}, true);
    const ConditionalEmbeddings cond = random_cond(rng, 2, 4, {1, 1});
    const Tensor w = randn(rng, {4, 4, 4});
    auto tensors = store.trainable();
    tensors.insert(tensors.end(), {{"x", x}, {"skip", skip}, {"t_emb", t_emb}});
    out.push_back(
        check("ublock", [&] { return sum(mul(block.forward(x, skip, cond, t_emb), w)); }, tensors, 12, seed));
  }
  {
    ParamStore store;
    GraphEmbeddingTables tables(store, "graph.tables", 4, rng);
    std::vector<GraphConvLayer> layers;
    layers.emplace_back(store, "graph.layer0", 4, 4, 6, rng);
    layers.emplace_back(store, "graph.layer1", 4, 4, 6, rng);
    const SceneGraph g = parse_caption("a green triangle above a red circle left of a blue square");
    const Tensor wn = randn(rng, {3, 4}), we = randn(rng, {2, 4});
    out.push_back(check(
        "graphconv",
        [&] {
          const auto e = graph_embed(g, tables, layers);
          return add(sum(mul(e.nodes, wn)), sum(mul(e.edges, we)));
        },
        store.trainable(), 20, seed));
  }
  {
    ParamStore store;
    UNetConfig c;
    c.resolution = 8;
    c.patch = 1;
    c.base_dim = 4;
    c.merges = 1;
    c.head_dim = 2;
    c.window = 4;
    c.mlp_ratio = 2;
    c.d_cond = 4;
    c.timesteps = 50;
    UNet net(store, "unet", c, rng);
    Tensor z = randn(rng, {8, 8, 3}, true);
    const ConditionalEmbeddings cond = random_cond(rng, 3, 4, {1, 0, 1});
    const Tensor target = randn(rng, {8, 8, 3});
    auto tensors = store.trainable();
    tensors.emplace_back("z", z);
    out.push_back(
        check("unet 8x8 end to end", [&] { return mse(net.forward(z, 5, cond), target); }, tensors, 6, seed,
              kEndToEndTol));
  }
  return out;
}

}  // namespace scenediff
