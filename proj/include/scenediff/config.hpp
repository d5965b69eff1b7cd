// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "scenediff/textenc.hpp"
#include "scenediff/unet.hpp"

namespace scenediff {

// Architecture of the whole cascade and its conditioner.
struct ModelConfig {
  TextEncoderConfig text{32, 1, 4, 16, 2};
  std::int64_t d_graph = 32;
  std::int64_t graph_layers = 2;
  std::int64_t graph_hidden = 64;
  std::int64_t d_cond = 32;
  std::int64_t timesteps = 1000;
  PredictionTarget target = PredictionTarget::kEpsilon;
  // base (8 px), sr1 (16 px), sr2 (32 px)
  std::array<UNetConfig, 3> stages;
  // Ablation flags. Scene-graph off masks the graph rows; swin off swaps
  // windowed attention for full attention with the same parameters.
  bool use_scene_graph = true;
  bool use_swin_unet = true;

  ModelConfig();
  // Per-stage UNet configs with the shared fields (d_cond, timesteps,
  // target, windowed) filled in.
  UNetConfig stage(std::int64_t index) const;
  void validate() const;
};

struct DatasetConfig {
  std::string path = "data";
  std::uint64_t seed = 1;
  std::int64_t size = 64;
  std::int64_t heldout = 16;
};

// Full-scale values are the defaults; desk profiles override them.
struct TrainConfig {
  double learning_rate = 1e-4;
  std::int64_t warmup_steps = 10000;
  std::int64_t batch_size = 8;
  std::int64_t epochs = 1000;
  std::int64_t steps = 0;  // overrides epochs when positive
  std::int64_t first_stage = 0;
  std::int64_t last_stage = 2;
  std::int64_t train_subset = 0;  // first k training samples when positive
  bool train_text = true;         // joint text-encoder training; false freezes it
  bool train_graph = false;       // graph module frozen after pretraining unless set
  std::int64_t graph_pretrain_steps = 400;
  double graph_pretrain_lr = 3e-3;
  std::int64_t checkpoint_every = 0;

  // Optimizer steps for a training set of n samples.
  std::int64_t total_steps(std::int64_t n) const;
};

struct SampleConfig {
  std::int64_t steps = 50;  // strided reverse steps per stage
  std::int64_t last_stage = 2;
};

struct EvalConfig {
  std::int64_t n = 16;
  std::int64_t feature_steps = 600;
  double feature_lr = 3e-3;
  std::int64_t loss_draws = 4;  // (t, eps) draws per held-out sample
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  SampleConfig sample;
  EvalConfig eval;
};

// Missing keys keep their defaults; unknown keys and ill-typed values raise
// ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& config);
std::string dump_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

}  // namespace scenediff
