// SPDX-License-Identifier: Apache-2.0
#include "scenediff/graphconv.hpp"

#include "scenediff/errors.hpp"

namespace scenediff {
namespace {

Tensor constant(std::int64_t rows, std::int64_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

}  // namespace

GraphEmbeddingTables::GraphEmbeddingTables(ParamStore& store, const std::string& path, std::int64_t d, Rng& rng)
    : dim(d) {
  category = store.add(path + ".category", init::normal(rng, {static_cast<std::int64_t>(grammar::kCategories.size()), d}, 1.0));
  attribute = store.add(path + ".attribute", init::normal(rng, {static_cast<std::int64_t>(grammar::kColors.size()), d}, 1.0));
  predicate = store.add(path + ".predicate", init::normal(rng, {static_cast<std::int64_t>(grammar::kPredicates.size()), d}, 1.0));
}

GraphVectors init_vectors(const SceneGraph& graph, const GraphEmbeddingTables& tables) {
  const auto n = static_cast<std::int64_t>(graph.objects.size());
  if (n == 0) throw SchemaError("init_vectors: graph has no objects");
  const std::int64_t nc = tables.category.shape()[0], na = tables.attribute.shape()[0];
  std::vector<double> sel_cat(static_cast<std::size_t>(n * nc), 0.0), sel_attr(static_cast<std::size_t>(n * na), 0.0);
  bool any_attr = false;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& o = graph.objects[static_cast<std::size_t>(i)];
    const int c = grammar::category_id(o.category);
    if (c < 0) throw SchemaError("unknown category '" + o.category + "'");
    sel_cat[static_cast<std::size_t>(i * nc + c)] = 1.0;
    for (const auto& a : o.attributes) {
      const int k = grammar::color_id(a);
      if (k < 0) throw SchemaError("unknown attribute '" + a + "'");
      sel_attr[static_cast<std::size_t>(i * na + k)] += 1.0 / static_cast<double>(o.attributes.size());
      any_attr = true;
    }
  }
  GraphVectors out;
  out.nodes = matmul(constant(n, nc, std::move(sel_cat)), tables.category);
  if (any_attr) out.nodes = add(out.nodes, matmul(constant(n, na, std::move(sel_attr)), tables.attribute));
  if (!graph.edges.empty()) {
    const auto e = static_cast<std::int64_t>(graph.edges.size());
    const std::int64_t np = tables.predicate.shape()[0];
    std::vector<double> sel(static_cast<std::size_t>(e * np), 0.0);
    for (std::int64_t k = 0; k < e; ++k) {
      const int p = grammar::predicate_id(graph.edges[static_cast<std::size_t>(k)].predicate);
      if (p < 0) throw SchemaError("unknown predicate '" + graph.edges[static_cast<std::size_t>(k)].predicate + "'");
      sel[static_cast<std::size_t>(k * np + p)] = 1.0;
    }
    out.edges = matmul(constant(e, np, std::move(sel)), tables.predicate);
  }
  return out;
}

GraphConvLayer::GraphConvLayer(ParamStore& store, const std::string& path, std::int64_t d_in, std::int64_t d_out,
                               std::int64_t hidden, Rng& rng)
    : d_in_(d_in), d_out_(d_out), hidden_(hidden) {
  if (hidden > 0) {
    fc1 = nn::Linear(store, path + ".fc1", 3 * d_in, hidden, rng);
    fc2 = nn::Linear(store, path + ".fc2", hidden, 3 * d_out, rng);
  } else {
    fc1 = nn::Linear(store, path + ".fc1", 3 * d_in, 3 * d_out, rng);
  }
  isolated = nn::Linear(store, path + ".isolated", d_in, d_out, rng);
}

Tensor GraphConvLayer::candidates(const Tensor& triples) const {
  return hidden_ > 0 ? fc2(gelu(fc1(triples))) : fc1(triples);
}

GraphVectors GraphConvLayer::forward(const SceneGraph& graph, const GraphVectors& in) const {
  const auto n = in.nodes.shape()[0];
  if (in.nodes.shape()[1] != d_in_ || (in.edges.defined() && in.edges.shape()[1] != d_in_))
    throw ShapeError("graph conv layer expects width " + std::to_string(d_in_));
  const auto e = static_cast<std::int64_t>(graph.edges.size());
  if (e != in.num_edges()) throw ShapeError("graph conv: edge vector count differs from graph");

  std::vector<std::int64_t> degree(static_cast<std::size_t>(n), 0);
  for (const auto& t : graph.edges) {
    ++degree[static_cast<std::size_t>(t.subject)];
    ++degree[static_cast<std::size_t>(t.object)];
  }
  std::vector<std::int64_t> lonely;
  for (std::int64_t i = 0; i < n; ++i)
    if (degree[static_cast<std::size_t>(i)] == 0) lonely.push_back(i);

  GraphVectors out;
  Tensor pooled;
  if (e > 0) {
    std::vector<std::int64_t> subj, obj;
    for (const auto& t : graph.edges) {
      subj.push_back(t.subject);
      obj.push_back(t.object);
    }
    Tensor triples = concat_last({take_rows(in.nodes, subj), in.edges, take_rows(in.nodes, obj)});
    Tensor cand = candidates(triples);
    Tensor s_cand = narrow_last(cand, 0, d_out_);
    out.edges = narrow_last(cand, d_out_, d_out_);
    Tensor o_cand = narrow_last(cand, 2 * d_out_, d_out_);
    // pool[i, k] = 1/deg(i) for each candidate k addressed to node i
    std::vector<double> ps(static_cast<std::size_t>(n * e), 0.0), po(static_cast<std::size_t>(n * e), 0.0);
    for (std::int64_t k = 0; k < e; ++k) {
      const auto s = subj[static_cast<std::size_t>(k)], o = obj[static_cast<std::size_t>(k)];
      ps[static_cast<std::size_t>(s * e + k)] = 1.0 / static_cast<double>(degree[static_cast<std::size_t>(s)]);
      po[static_cast<std::size_t>(o * e + k)] = 1.0 / static_cast<double>(degree[static_cast<std::size_t>(o)]);
    }
    pooled = add(matmul(constant(n, e, std::move(ps)), s_cand), matmul(constant(n, e, std::move(po)), o_cand));
  }
  if (!lonely.empty()) {
    const auto m = static_cast<std::int64_t>(lonely.size());
    Tensor iso = isolated(take_rows(in.nodes, lonely));
    std::vector<double> scatter(static_cast<std::size_t>(n * m), 0.0);
    for (std::int64_t j = 0; j < m; ++j) scatter[static_cast<std::size_t>(lonely[static_cast<std::size_t>(j)] * m + j)] = 1.0;
    Tensor placed = matmul(constant(n, m, std::move(scatter)), iso);
    pooled = pooled.defined() ? add(pooled, placed) : placed;
  }
  out.nodes = pooled;
  return out;
}

GraphEmbeddings graph_embed(const SceneGraph& graph, const GraphEmbeddingTables& tables,
                            const std::vector<GraphConvLayer>& layers) {
  validate(graph);
  std::int64_t width = tables.dim;
  for (const auto& l : layers) {
    if (l.d_in() != width) throw ShapeError("graph conv layer chain breaks: expected input width " + std::to_string(width));
    width = l.d_out();
  }
  GraphVectors v = init_vectors(graph, tables);
  for (const auto& l : layers) v = l.forward(graph, v);
  return v;
}

}  // namespace scenediff
