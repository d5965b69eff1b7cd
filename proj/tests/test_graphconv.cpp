// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "scenediff/errors.hpp"
#include "scenediff/gradcheck.hpp"
#include "scenediff/graphconv.hpp"
#include "test_helpers.hpp"

using namespace scenediff;
using testutil::to_vec;

namespace {

std::vector<double> row(const Tensor& t, std::int64_t r) {
  const auto d = t.shape()[1];
  return {t.data().begin() + r * d, t.data().begin() + (r + 1) * d};
}

SceneGraph random_graph(Rng& rng, std::int64_t max_nodes, std::int64_t max_edges) {
  SceneGraph g;
  const auto n = 1 + static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(max_nodes)));
  for (std::int64_t i = 0; i < n; ++i) {
    SceneObject o{std::string(grammar::kCategories[rng.uniform_int(3)]), {}};
    const auto na = rng.uniform_int(3);
    for (std::uint64_t a = 0; a < na; ++a) o.attributes.emplace_back(grammar::kColors[rng.uniform_int(3)]);
    g.objects.push_back(o);
  }
  if (n > 1) {
    const auto ne = rng.uniform_int(static_cast<std::uint64_t>(max_edges + 1));
    for (std::uint64_t k = 0; k < ne; ++k) {
      const auto s = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      auto o = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
      if (o >= s) ++o;
      g.edges.push_back({s, std::string(grammar::kPredicates[rng.uniform_int(4)]), o});
    }
  }
  return g;
}

struct Rows {
  std::vector<std::vector<double>> nodes, edges;
};

Rows rows_of(const GraphVectors& v) {
  Rows r;
  for (std::int64_t i = 0; i < v.nodes.shape()[0]; ++i) r.nodes.push_back(row(v.nodes, i));
  for (std::int64_t k = 0; k < v.num_edges(); ++k) r.edges.push_back(row(v.edges, k));
  return r;
}

// One candidate-network evaluation per triple, explicit candidate lists per
// node, plain averaging.
Rows brute_force_layer(const GraphConvLayer& layer, const SceneGraph& g, const Rows& in) {
  const auto d_out = layer.d_out();
  const auto n = g.objects.size();
  std::vector<std::vector<std::vector<double>>> pool(n);
  Rows out;
  for (const auto& e : g.edges) {
    std::vector<double> triple;
    for (const auto* part : {&in.nodes[static_cast<std::size_t>(e.subject)], &in.edges[out.edges.size()],
                             &in.nodes[static_cast<std::size_t>(e.object)]})
      triple.insert(triple.end(), part->begin(), part->end());
    const Tensor c = layer.candidates(Tensor({1, static_cast<std::int64_t>(triple.size())}, triple));
    const auto cv = to_vec(c);
    pool[static_cast<std::size_t>(e.subject)].emplace_back(cv.begin(), cv.begin() + d_out);
    out.edges.emplace_back(cv.begin() + d_out, cv.begin() + 2 * d_out);
    pool[static_cast<std::size_t>(e.object)].emplace_back(cv.begin() + 2 * d_out, cv.end());
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (pool[i].empty()) {
      const auto& v = in.nodes[i];
      out.nodes.push_back(to_vec(layer.isolated(Tensor({1, static_cast<std::int64_t>(v.size())}, v))));
      continue;
    }
    std::vector<double> acc(static_cast<std::size_t>(d_out), 0.0);
    for (const auto& c : pool[i])
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += c[j];
    for (auto& a : acc) a /= static_cast<double>(pool[i].size());
    out.nodes.push_back(acc);
  }
  return out;
}

void expect_rows_near(const Rows& a, const Rows& b, double tol) {
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  ASSERT_EQ(a.edges.size(), b.edges.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i)
    for (std::size_t j = 0; j < a.nodes[i].size(); ++j) EXPECT_NEAR(a.nodes[i][j], b.nodes[i][j], tol);
  for (std::size_t i = 0; i < a.edges.size(); ++i)
    for (std::size_t j = 0; j < a.edges[i].size(); ++j) EXPECT_NEAR(a.edges[i][j], b.edges[i][j], tol);
}

struct Fixture {
  ParamStore store;
  Rng rng{21};
  GraphEmbeddingTables tables;
  std::vector<GraphConvLayer> layers;
  explicit Fixture(std::int64_t d = 6, std::int64_t m = 2, std::int64_t hidden = 10) {
    tables = GraphEmbeddingTables(store, "gcn.tables", d, rng);
    for (std::int64_t k = 0; k < m; ++k)
      layers.emplace_back(store, "gcn.layer" + std::to_string(k), d, d, hidden, rng);
  }
};

}  // namespace

TEST(InitVectors, AttributeMeanConvention) {
  Fixture f;
  SceneGraph g;
  g.objects = {{"square", {}}, {"circle", {"red"}}, {"triangle", {"green", "blue"}}};
  g.edges = {{0, "below", 2}};
  const GraphVectors v = init_vectors(g, f.tables);
  EXPECT_EQ(row(v.nodes, 0), row(f.tables.category, 1));
  const auto circle = row(f.tables.category, 0), red = row(f.tables.attribute, 0);
  const auto tri = row(f.tables.category, 2), green = row(f.tables.attribute, 1), blue = row(f.tables.attribute, 2);
  for (std::size_t j = 0; j < circle.size(); ++j) {
    EXPECT_DOUBLE_EQ(row(v.nodes, 1)[j], circle[j] + red[j]);
    EXPECT_NEAR(row(v.nodes, 2)[j], tri[j] + (green[j] + blue[j]) / 2.0, 1e-12);
  }
  EXPECT_EQ(row(v.edges, 0), row(f.tables.predicate, 3));
}

TEST(InitVectors, UnknownSymbolRaises) {
  Fixture f;
  SceneGraph g;
  g.objects = {{"hexagon", {}}};
  EXPECT_THROW(init_vectors(g, f.tables), SchemaError);
  g.objects = {{"circle", {"purple"}}};
  EXPECT_THROW(init_vectors(g, f.tables), SchemaError);
}

TEST(GraphConvLayer, IdentityCandidateNetworkPassesThrough) {
  ParamStore store;
  Rng rng(1);
  GraphEmbeddingTables tables(store, "t", 4, rng);
  GraphConvLayer layer(store, "l", 4, 4, 0, rng);
  nn::set_identity(layer.fc1);
  const SceneGraph g = parse_caption("a red circle left of a blue square");
  const GraphVectors in = init_vectors(g, tables);
  const GraphVectors out = layer.forward(g, in);
  EXPECT_EQ(to_vec(out.nodes), to_vec(in.nodes));
  EXPECT_EQ(to_vec(out.edges), to_vec(in.edges));
}

TEST(GraphConvLayer, TwoOutgoingEdgesAverageSubjectCandidates) {
  Fixture f(5, 1);
  SceneGraph g;
  g.objects = {{"circle", {"red"}}, {"square", {"blue"}}, {"triangle", {"green"}}};
  g.edges = {{0, "left of", 1}, {0, "above", 2}};
  const GraphVectors in = init_vectors(g, f.tables);
  const GraphVectors out = f.layers[0].forward(g, in);
  auto cand = [&](std::int64_t s, std::int64_t e, std::int64_t o) {
    std::vector<double> t = row(in.nodes, s);
    for (auto* part : {&in.edges, &in.nodes}) {
      const auto r = row(*part, part == &in.edges ? e : o);
      t.insert(t.end(), r.begin(), r.end());
    }
    return to_vec(f.layers[0].candidates(Tensor({1, 15}, t)));
  };
  const auto c0 = cand(0, 0, 1), c1 = cand(0, 1, 2);
  for (std::int64_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(out.nodes.at(j), (c0[static_cast<std::size_t>(j)] + c1[static_cast<std::size_t>(j)]) / 2.0, 1e-12);
    EXPECT_NEAR(out.nodes.at(5 + j), c0[static_cast<std::size_t>(10 + j)], 1e-12);
    EXPECT_NEAR(out.nodes.at(10 + j), c1[static_cast<std::size_t>(10 + j)], 1e-12);
    EXPECT_NEAR(out.edges.at(j), c0[static_cast<std::size_t>(5 + j)], 1e-12);
    EXPECT_NEAR(out.edges.at(5 + j), c1[static_cast<std::size_t>(5 + j)], 1e-12);
  }
}

TEST(GraphConvLayer, MatchesPerTripleOracleOnRandomGraphs) {
  Fixture f(6, 1);
  Rng gen(99);
  for (int trial = 0; trial < 200; ++trial) {
    const SceneGraph g = random_graph(gen, 4, 4);
    const GraphVectors in = init_vectors(g, f.tables);
    expect_rows_near(rows_of(f.layers[0].forward(g, in)), brute_force_layer(f.layers[0], g, rows_of(in)), 1e-6);
  }
}

TEST(GraphConvLayer, DimensionMismatchRaises) {
  Fixture f(6, 1);
  ParamStore store;
  Rng rng(2);
  GraphConvLayer wide(store, "w", 8, 8, 4, rng);
  const SceneGraph g = parse_caption("a red circle");
  EXPECT_THROW(wide.forward(g, init_vectors(g, f.tables)), ShapeError);
  std::vector<GraphConvLayer> chain{f.layers[0], wide};
  EXPECT_THROW(graph_embed(g, f.tables, chain), ShapeError);
}

TEST(GraphEmbed, PermutationEquivariance) {
  Fixture f;
  Rng gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const SceneGraph g = random_graph(gen, 4, 4);
    std::vector<std::int64_t> perm(g.objects.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[gen.uniform_int(i)]);
    SceneGraph h = g;
    for (std::size_t i = 0; i < perm.size(); ++i) h.objects[static_cast<std::size_t>(perm[i])] = g.objects[i];
    for (auto& e : h.edges) {
      e.subject = perm[static_cast<std::size_t>(e.subject)];
      e.object = perm[static_cast<std::size_t>(e.object)];
    }
    const Rows a = rows_of(graph_embed(g, f.tables, f.layers));
    const Rows b = rows_of(graph_embed(h, f.tables, f.layers));
    Rows permuted = a;
    for (std::size_t i = 0; i < perm.size(); ++i) permuted.nodes[static_cast<std::size_t>(perm[i])] = a.nodes[i];
    expect_rows_near(b, permuted, 1e-6);
  }
}

TEST(GraphEmbed, EdgeOrderInvariance) {
  Fixture f;
  Rng gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const SceneGraph g = random_graph(gen, 4, 4);
    std::vector<std::size_t> order(g.edges.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[gen.uniform_int(i)]);
    SceneGraph h = g;
    for (std::size_t k = 0; k < order.size(); ++k) h.edges[k] = g.edges[order[k]];
    const Rows a = rows_of(graph_embed(g, f.tables, f.layers));
    Rows b = rows_of(graph_embed(h, f.tables, f.layers));
    Rows unshuffled = b;
    for (std::size_t k = 0; k < order.size(); ++k) unshuffled.edges[order[k]] = b.edges[k];
    expect_rows_near(a, unshuffled, 1e-6);
  }
}

TEST(GraphEmbed, ZeroLayersReturnsInitialVectors) {
  Fixture f(6, 0);
  const SceneGraph g = parse_caption("a red circle above a green square");
  const GraphEmbeddings e = graph_embed(g, f.tables, f.layers);
  const GraphVectors v = init_vectors(g, f.tables);
  EXPECT_EQ(to_vec(e.nodes), to_vec(v.nodes));
  EXPECT_EQ(to_vec(e.edges), to_vec(v.edges));
}

TEST(GraphEmbed, TwoLayersComposeOracleRuns) {
  Fixture f(6, 2);
  const SceneGraph g = parse_caption("a green triangle above a red circle left of a blue square");
  const Rows first = brute_force_layer(f.layers[0], g, rows_of(init_vectors(g, f.tables)));
  const Rows second = brute_force_layer(f.layers[1], g, first);
  expect_rows_near(rows_of(graph_embed(g, f.tables, f.layers)), second, 1e-6);
}

TEST(GraphEmbed, NoEdgeGraphHasNoRelationRows) {
  Fixture f;
  SceneGraph g;
  g.objects = {{"circle", {"red"}}, {"square", {}}};
  const GraphEmbeddings e = graph_embed(g, f.tables, f.layers);
  EXPECT_EQ(e.num_edges(), 0);
  EXPECT_FALSE(e.edges.defined());
  EXPECT_EQ(e.nodes.shape(), (Shape{2, 6}));
}

TEST(GraphEmbed, GradientCheck) {
  Fixture f(4, 2, 6);
  const SceneGraph g = parse_caption("a green triangle above a red circle left of a blue square");
  Rng wr(3);
  const Tensor wn = testutil::random_tensor(wr, {3, 4});
  const Tensor we = testutil::random_tensor(wr, {2, 4});
  auto loss = [&] {
    const auto e = graph_embed(g, f.tables, f.layers);
    return add(sum(mul(e.nodes, wn)), sum(mul(e.edges, we)));
  };
  GradCheckOptions opt;
  opt.max_entries = 20;
  const auto report = grad_check(loss, f.store.trainable(), opt);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
}
