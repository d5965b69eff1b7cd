// SPDX-License-Identifier: Apache-2.0
#include "scenediff/runner.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/ops.hpp"

namespace scenediff {

std::vector<Sample> training_subset(const Dataset& data, const TrainConfig& config) {
  if (data.train.empty()) throw ConfigError("dataset has no training samples");
  if (config.train_subset <= 0 || config.train_subset >= static_cast<std::int64_t>(data.train.size()))
    return data.train;
  return {data.train.begin(), data.train.begin() + config.train_subset};
}

std::uint64_t trainer_seed(std::uint64_t run_seed, std::int64_t stage) {
  return Rng::mix(run_seed ^ Rng::mix(0x7452u + static_cast<std::uint64_t>(stage)));
}

void train_model(Model& model, const RunConfig& config, const std::vector<Sample>& train, const TrainHooks& hooks,
                 const Checkpoint* resume) {
  std::int64_t resume_stage = -1;
  if (resume != nullptr) {
    try {
      resume_stage = nlohmann::json::parse(resume->metadata).at("stage").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("resume checkpoint has no stage: ") + e.what());
    }
    if (resume_stage < config.train.first_stage || resume_stage > config.train.last_stage)
      throw CheckpointError("resume checkpoint stage " + std::to_string(resume_stage) + " is outside the stage range");
  }
  const bool pretrain = resume == nullptr && config.train.first_stage == 0 && config.model.use_scene_graph &&
                        config.train.graph_pretrain_steps > 0;
  if (pretrain) {
    std::vector<SceneGraph> graphs;
    for (const auto& s : train) graphs.push_back(s.graph);
    pretrain_graph(model, graphs, config.train.graph_pretrain_steps, config.train.graph_pretrain_lr,
                   trainer_seed(config.seed, -1));
  }
  const std::int64_t total = config.train.total_steps(static_cast<std::int64_t>(train.size()));
  const std::int64_t first = resume != nullptr ? resume_stage : config.train.first_stage;
  for (std::int64_t s = first; s <= config.train.last_stage; ++s) {
    Trainer trainer(model, s, config.train, train, trainer_seed(config.seed, s));
    if (resume != nullptr && s == resume_stage) trainer.restore(*resume);
    while (trainer.steps_taken() < total) {
      const double lr = trainer.learning_rate();
      const double loss = trainer.step();
      if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
      if (hooks.on_step) hooks.on_step({s, trainer.steps_taken(), loss, lr});
      const bool periodic = config.train.checkpoint_every > 0 && trainer.steps_taken() % config.train.checkpoint_every == 0;
      if (hooks.on_checkpoint && (periodic || trainer.steps_taken() == total)) hooks.on_checkpoint(trainer);
    }
  }
}

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint ckpt;
  ckpt.tensors = model.store().all();
  nlohmann::json meta;
  meta["kind"] = "model";
  meta["model"] = nlohmann::json::parse(dump_model_config(model.config()));
  ckpt.metadata = meta.dump();
  return ckpt;
}

std::unique_ptr<Model> load_model(const Checkpoint& ckpt) {
  ModelConfig mc;
  try {
    mc = parse_model_config(nlohmann::json::parse(ckpt.metadata).at("model").dump());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint has no model description: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint model description is invalid: ") + e.what());
  }
  auto model = std::make_unique<Model>(mc, 0);
  std::map<std::string, Tensor> params;
  for (const auto& [k, v] : ckpt.tensors)
    if (k.rfind("adam.", 0) != 0) params.emplace(k, v);
  try {
    model->store().load(params);
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint does not match its model description: ") + e.what());
  }
  return model;
}

FeatureEvaluator::FeatureEvaluator(const std::vector<Sample>& reals, std::int64_t steps, double learning_rate,
                                   std::uint64_t seed) {
  if (reals.empty()) throw ConfigError("feature network needs real images");
  Rng rng(seed);
  net_ = std::make_unique<ToyFeatureNet>(store_, "features", rng);
  std::vector<std::int64_t> labels;
  for (const auto& s : reals) labels.push_back(ToyFeatureNet::label_of(s.graph));
  net_->train(store_, images_at(reals, 0), labels, steps, learning_rate);
  store_.set_trainable("", false);
}

double FeatureEvaluator::fid_proxy(const std::vector<Tensor>& a, const std::vector<Tensor>& b) const {
  if (a.size() < 2 || b.size() < 2) throw ConfigError("FID needs at least 2 images per set");
  return fid(gaussian_stats(net_->features(a)), gaussian_stats(net_->features(b)));
}

double FeatureEvaluator::is_proxy(const std::vector<Tensor>& images) const {
  return inception_score(net_->probabilities(images));
}

double FeatureEvaluator::accuracy(const std::vector<Sample>& samples) const {
  std::vector<std::int64_t> labels;
  for (const auto& s : samples) labels.push_back(ToyFeatureNet::label_of(s.graph));
  return net_->accuracy(images_at(samples, 0), labels);
}

std::vector<Tensor> images_at(const std::vector<Sample>& samples, std::int64_t stage) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(stage_target(s, stage));
  return out;
}

std::vector<Tensor> sample_captions(const Model& model, const std::vector<std::string>& captions,
                                    std::int64_t sample_steps, std::int64_t last_stage, std::uint64_t seed) {
  Rng root(seed);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    Rng rng = root.fork(i);
    out.push_back(model.sample(captions[i], sample_steps, last_stage, rng).back());
  }
  return out;
}

std::vector<AblationRow> ablation_rows() {
  std::vector<AblationRow> rows(4);
  rows[0].label = "Imagen";
  rows[0].published_fid = 7.27;
  rows[1].label = "Imagen_sg";
  rows[1].use_scene_graph = true;
  rows[1].published_fid = 7.24;
  rows[2].label = "Swinv2-Imagen_su";
  rows[2].use_swin_unet = true;
  rows[2].published_fid = 7.23;
  rows[3].label = "Swinv2-Imagen";
  rows[3].use_scene_graph = true;
  rows[3].use_swin_unet = true;
  rows[3].published_fid = 7.21;
  return rows;
}

void run_ablation_row(AblationRow& row, const RunConfig& config, const Dataset& data,
                      const FeatureEvaluator* evaluator) {
  if (data.heldout.empty()) throw ConfigError("ablation needs a held-out split");
  RunConfig rc = config;
  rc.model.use_scene_graph = row.use_scene_graph;
  rc.model.use_swin_unet = row.use_swin_unet;
  rc.train.first_stage = 0;
  rc.train.last_stage = 0;
  Model model(rc.model, rc.seed);
  row.parameters = model.store().numel();
  const auto train = training_subset(data, rc.train);
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogEntry& e) {
    row.final_train_loss = e.loss;
    row.finite = row.finite && std::isfinite(e.loss);
  };
  train_model(model, rc, train, hooks);
  row.heldout_loss = heldout_loss(model, 0, data.heldout, rc.eval.loss_draws, rc.seed ^ 0x4e1du);
  if (evaluator != nullptr) {
    std::vector<std::string> captions;
    for (const auto& s : data.heldout) captions.push_back(s.caption);
    const auto fake = sample_captions(model, captions, rc.sample.steps, 0, rc.seed ^ 0x5a3bu);
    row.fid_proxy = evaluator->fid_proxy(fake, images_at(data.heldout, 0));
  }
}

std::string ablation_table_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| Model | Scene graph | Swinv2-Unet | Held-out loss | FID-proxy | Parameters | Published FID (context) |\n";
  os << "|---|---|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& r : rows) {
    os << "| " << r.label << " | " << (r.use_scene_graph ? "YES" : "") << " | " << (r.use_swin_unet ? "YES" : "")
       << " | ";
    std::snprintf(buf, sizeof buf, "%.5f", r.heldout_loss);
    os << buf << " | ";
    std::snprintf(buf, sizeof buf, "%.4f", r.fid_proxy);
    os << buf << " | " << r.parameters << " | ";
    std::snprintf(buf, sizeof buf, "%.2f", r.published_fid);
    os << buf << " |\n";
  }
  return os.str();
}

}  // namespace scenediff
