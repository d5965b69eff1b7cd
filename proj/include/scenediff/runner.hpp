// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scenediff/metrics.hpp"
#include "scenediff/pipeline.hpp"

namespace scenediff {

struct TrainLogEntry {
  std::int64_t stage = 0;
  std::int64_t step = 0;  // 1-based optimizer step within the stage
  double loss = 0;
  double learning_rate = 0;
};

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_step;
  // Called every checkpoint_every steps and after the last step of a stage.
  std::function<void(const Trainer&)> on_checkpoint;
};

// Training subset selected by train.train_subset.
std::vector<Sample> training_subset(const Dataset& data, const TrainConfig& config);

// Pretrains the scene-graph module on the training graphs (when enabled and
// not resuming past the base stage), then trains stages first..last in order.
// `resume`, when given, must come from Trainer::checkpoint() of a stage in
// range; training continues from that stage and step.
void train_model(Model& model, const RunConfig& config, const std::vector<Sample>& train, const TrainHooks& hooks,
                 const Checkpoint* resume = nullptr);

// Per-stage trainer seed derived from the run seed.
std::uint64_t trainer_seed(std::uint64_t run_seed, std::int64_t stage);

// Parameters only, with metadata {"kind":"model","model":{...}}.
Checkpoint model_checkpoint(const Model& model);
// Accepts model checkpoints and trainer checkpoints; Adam moments are ignored.
std::unique_ptr<Model> load_model(const Checkpoint& ckpt);

// Frozen ToyFeatureNet trained on real images, shared by FID/IS proxies.
class FeatureEvaluator {
 public:
  FeatureEvaluator(const std::vector<Sample>& reals, std::int64_t steps, double learning_rate, std::uint64_t seed);
  double fid_proxy(const std::vector<Tensor>& a, const std::vector<Tensor>& b) const;
  double is_proxy(const std::vector<Tensor>& images) const;
  double accuracy(const std::vector<Sample>& samples) const;

 private:
  ParamStore store_;
  std::unique_ptr<ToyFeatureNet> net_;
};

// Images of `samples` at a ladder rung.
std::vector<Tensor> images_at(const std::vector<Sample>& samples, std::int64_t stage);

// Samples one image per caption up to `last_stage`; returns the last rung.
// Sample i uses Rng(seed).fork(i), so results do not depend on batch order.
std::vector<Tensor> sample_captions(const Model& model, const std::vector<std::string>& captions,
                                    std::int64_t sample_steps, std::int64_t last_stage, std::uint64_t seed);

struct AblationRow {
  std::string label;
  bool use_scene_graph = false;
  bool use_swin_unet = false;
  double published_fid = 0;  // reported for context only
  double heldout_loss = 0;
  double fid_proxy = 0;
  double final_train_loss = 0;
  bool finite = true;
  std::int64_t parameters = 0;
};

// The four rows in table order: Imagen, Imagen_sg, Swinv2-Imagen_su, Swinv2-Imagen.
std::vector<AblationRow> ablation_rows();

// Trains the base stage of one row with the shared seed and step budget and
// scores it on the held-out split. `evaluator` may be null (FID skipped).
void run_ablation_row(AblationRow& row, const RunConfig& config, const Dataset& data,
                      const FeatureEvaluator* evaluator);

std::string ablation_table_markdown(const std::vector<AblationRow>& rows);

}  // namespace scenediff
