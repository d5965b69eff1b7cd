// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "scenediff/checkpoint.hpp"
#include "scenediff/config.hpp"
#include "scenediff/datagen.hpp"
#include "scenediff/diffusion.hpp"
#include "scenediff/graphconv.hpp"
#include "scenediff/optim.hpp"
#include "scenediff/textenc.hpp"
#include "scenediff/unet.hpp"

namespace scenediff {

// Frozen encodings of one caption, reusable while the encoders are frozen.
struct EncodedCaption {
  TextEmbeddings text;
  bool has_graph = false;
  GraphEmbeddings graph;
};

// Conditioner (text encoder, scene-graph module, adapters) plus the three
// cascade stages, all registered in one ParamStore:
//   text.*, graph.tables.*, graph.layer{i}.*, cond.*, stage{0,1,2}.*
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const Vocabulary& vocab() const { return vocab_; }
  const DiffusionStage& stage(std::int64_t index) const { return *stages_.at(static_cast<std::size_t>(index)); }
  const GraphEmbeddingTables& graph_tables() const { return tables_; }
  const std::vector<GraphConvLayer>& graph_layers() const { return layers_; }

  // With use_scene_graph the caption must parse (ParseError otherwise).
  // Without it the graph rows are kept but masked, or left out entirely when
  // the caption does not parse.
  EncodedCaption encode(const std::string& caption) const;
  ConditionalEmbeddings condition(const EncodedCaption& encoded) const;
  ConditionalEmbeddings condition(const std::string& caption) const { return condition(encode(caption)); }

  // Runs stages 0..last_stage; returns one image per stage, clamped to [-1, 1].
  std::vector<Tensor> sample(const std::string& caption, std::int64_t sample_steps, std::int64_t last_stage,
                             Rng& rng) const;

 private:
  ModelConfig config_;
  ParamStore store_;
  Vocabulary vocab_;
  std::unique_ptr<TextEncoder> text_;
  GraphEmbeddingTables tables_;
  std::vector<GraphConvLayer> layers_;
  ConditionAdapters adapters_;
  std::vector<std::unique_ptr<DiffusionStage>> stages_;
};

// Low-resolution input of stage `index` for a sample: the ground-truth image
// one rung down the ladder (undefined for the base stage).
Tensor stage_low_input(const Sample& sample, std::int64_t index);
Tensor stage_target(const Sample& sample, std::int64_t index);

struct GraphPretrainReport {
  double initial_loss = 0;
  double final_loss = 0;
  double node_accuracy = 0;  // category, color, and layout cell all correct
  double edge_accuracy = 0;
};

// Self-supervised pretraining of the scene-graph module on graphs alone:
// auxiliary heads (kept outside the model store) predict each node's
// category, color and layout cell and each edge's predicate. Full-batch Adam.
GraphPretrainReport pretrain_graph(Model& model, const std::vector<SceneGraph>& graphs, std::int64_t steps,
                                   double learning_rate, std::uint64_t seed);

// Trains one stage. Trainable parameters: that stage's UNet, plus for the
// base stage the adapters and, when enabled, the text encoder and graph
// module. Each step draws batch_size samples with replacement.
class Trainer {
 public:
  Trainer(Model& model, std::int64_t stage, const TrainConfig& config, const std::vector<Sample>& data,
          std::uint64_t seed);

  // One optimizer step; returns the mean batch loss computed before the update.
  double step();
  std::int64_t steps_taken() const { return adam_.steps_taken(); }
  double learning_rate() const { return adam_.learning_rate(adam_.steps_taken() + 1); }
  std::int64_t stage() const { return stage_; }

  // Model parameters, Adam moments, and the trainer RNG state (in metadata).
  Checkpoint checkpoint() const;
  // Restores a checkpoint written by checkpoint() for the same stage.
  void restore(const Checkpoint& ckpt);

 private:
  void configure_trainable();
  const EncodedCaption* cached(const Sample& sample);

  Model& model_;
  std::int64_t stage_;
  TrainConfig config_;
  const std::vector<Sample>& data_;
  Rng rng_;
  Adam adam_;
  bool cache_conditioning_ = false;
  std::map<std::string, EncodedCaption> cache_;
};

// Mean denoising loss over samples x draws fixed (t, eps) pairs from `seed`.
// Paired across models: the same seed gives the same draws.
double heldout_loss(const Model& model, std::int64_t stage, const std::vector<Sample>& samples, std::int64_t draws,
                    std::uint64_t seed);

}  // namespace scenediff
