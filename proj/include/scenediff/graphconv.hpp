// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "scenediff/nn.hpp"
#include "scenediff/scenegraph.hpp"

namespace scenediff {

// Learned lookup rows for categories, attributes, and predicates.
struct GraphEmbeddingTables {
  Tensor category;   // [num_categories, dim]
  Tensor attribute;  // [num_colors, dim]
  Tensor predicate;  // [num_predicates, dim]
  std::int64_t dim = 0;

  GraphEmbeddingTables() = default;
  GraphEmbeddingTables(ParamStore& store, const std::string& path, std::int64_t dim, Rng& rng);
};

// Node and edge vectors of one graph. `edges` is undefined when the graph
// has no edges (tensors cannot have zero-length axes).
struct GraphVectors {
  Tensor nodes;  // [n, dim]
  Tensor edges;  // [|E|, dim]
  std::int64_t num_edges() const { return edges.defined() ? edges.shape()[0] : 0; }
};
using GraphEmbeddings = GraphVectors;

// node = category row + mean of attribute rows (zero without attributes);
// edge = predicate row.
GraphVectors init_vectors(const SceneGraph& graph, const GraphEmbeddingTables& tables);

// One triple-convolution layer. A single candidate network maps each
// concatenated triple [v_s; v_p; v_o] (3 * d_in) to three d_out segments:
// the subject candidate, the new edge vector, and the object candidate.
// A node's output is the arithmetic mean of every candidate it received as
// subject or object; nodes without edges go through `isolated` instead.
class GraphConvLayer {
 public:
  // hidden == 0 makes the candidate network a single linear map.
  GraphConvLayer(ParamStore& store, const std::string& path, std::int64_t d_in, std::int64_t d_out,
                 std::int64_t hidden, Rng& rng);

  GraphVectors forward(const SceneGraph& graph, const GraphVectors& in) const;
  // [rows, 3 * d_in] -> [rows, 3 * d_out]
  Tensor candidates(const Tensor& triples) const;

  std::int64_t d_in() const { return d_in_; }
  std::int64_t d_out() const { return d_out_; }

  nn::Linear fc1;
  nn::Linear fc2;  // unused when hidden == 0
  nn::Linear isolated;

 private:
  std::int64_t d_in_, d_out_, hidden_;
};

GraphEmbeddings graph_embed(const SceneGraph& graph, const GraphEmbeddingTables& tables,
                            const std::vector<GraphConvLayer>& layers);

}  // namespace scenediff
