// SPDX-License-Identifier: Apache-2.0
#include "scenediff/pipeline.hpp"

#include "json.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/nn.hpp"
#include "scenediff/ops.hpp"
#include "scenediff/swin.hpp"

namespace scenediff {

namespace {

const StageRole kRoles[3] = {StageRole::kBase, StageRole::kSr1, StageRole::kSr2};

std::string stage_path(std::int64_t s) { return "stage" + std::to_string(s); }

// Parameter-free layer norm, matching the scale of the text encoder output.
Tensor normalize_rows(const Tensor& x) {
  const std::int64_t d = x.shape().back();
  return layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}));
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), vocab_(Vocabulary::grammar_default()) {
  config_.validate();
  Rng root(seed);
  Rng text_rng = root.fork(1);
  Rng graph_rng = root.fork(2);
  Rng cond_rng = root.fork(3);
  text_ = std::make_unique<TextEncoder>(store_, "text", config_.text, vocab_.size(), text_rng);
  tables_ = GraphEmbeddingTables(store_, "graph.tables", config_.d_graph, graph_rng);
  for (std::int64_t i = 0; i < config_.graph_layers; ++i)
    layers_.emplace_back(store_, "graph.layer" + std::to_string(i), config_.d_graph, config_.d_graph,
                         config_.graph_hidden, graph_rng);
  adapters_ = ConditionAdapters(store_, "cond", config_.text.d_text, config_.d_graph, config_.d_cond, cond_rng);
  const NoiseSchedule schedule = NoiseSchedule::scaled_linear(config_.timesteps);
  for (std::int64_t s = 0; s < 3; ++s) {
    Rng stage_rng = root.fork(10 + static_cast<std::uint64_t>(s));
    const std::int64_t low = s == 0 ? 0 : config_.stages[static_cast<std::size_t>(s - 1)].resolution;
    stages_.push_back(std::make_unique<DiffusionStage>(store_, stage_path(s), kRoles[s], config_.stage(s), schedule,
                                                       low, stage_rng));
  }
}

EncodedCaption Model::encode(const std::string& caption) const {
  EncodedCaption out;
  SceneGraph graph;
  if (config_.use_scene_graph) {
    graph = parse_caption(caption);
    out.has_graph = true;
  } else {
    try {
      graph = parse_caption(caption);
      out.has_graph = true;
    } catch (const ParseError&) {
      out.has_graph = false;
    }
  }
  out.text = text_->encode(tokenize(caption, vocab_));
  if (out.has_graph) {
    out.graph = graph_embed(graph, tables_, layers_);
    out.graph.nodes = normalize_rows(out.graph.nodes);
    if (out.graph.num_edges() > 0) out.graph.edges = normalize_rows(out.graph.edges);
  }
  return out;
}

ConditionalEmbeddings Model::condition(const EncodedCaption& encoded) const {
  return build_conditional_embeddings(adapters_, encoded.text, encoded.has_graph ? &encoded.graph : nullptr,
                                      config_.use_scene_graph);
}

std::vector<Tensor> Model::sample(const std::string& caption, std::int64_t sample_steps, std::int64_t last_stage,
                                  Rng& rng) const {
  if (last_stage < 0 || last_stage > 2) throw ConfigError("last_stage must be 0, 1 or 2");
  const ConditionalEmbeddings cond = condition(caption);
  std::vector<const DiffusionStage*> chain;
  for (std::int64_t s = 0; s <= last_stage; ++s) chain.push_back(stages_[static_cast<std::size_t>(s)].get());
  const SamplingPlan plan = make_sampling_plan(stage(0).schedule(), sample_steps);
  return cascade_sample(chain, cond, plan, rng);
}

Tensor stage_low_input(const Sample& sample, std::int64_t index) {
  if (index == 0) return Tensor();
  return sample.images.at(static_cast<std::size_t>(index - 1));
}

Tensor stage_target(const Sample& sample, std::int64_t index) {
  return sample.images.at(static_cast<std::size_t>(index));
}

GraphPretrainReport pretrain_graph(Model& model, const std::vector<SceneGraph>& graphs, std::int64_t steps,
                                   double learning_rate, std::uint64_t seed) {
  GraphPretrainReport report;
  if (graphs.empty() || steps == 0) return report;
  constexpr std::int64_t kCat = 3, kColor = 3, kCell = 4, kPred = 4;
  std::vector<std::int64_t> cat, color, cell, pred;
  for (const auto& g : graphs) {
    const SceneSpec spec = layout_of(g);
    for (const auto& o : spec.objects) {
      cat.push_back(grammar::category_id(o.shape));
      color.push_back(grammar::color_id(o.color));
      cell.push_back(o.row * 2 + o.col);
    }
    for (const auto& e : g.edges) pred.push_back(grammar::predicate_id(e.predicate));
  }

  const std::int64_t d = model.config().graph_layers > 0 ? model.graph_layers().back().d_out()
                                                          : model.graph_tables().dim;
  ParamStore view;
  Rng rng(seed);
  nn::Linear node_head(view, "aux.node", d, kCat + kColor + kCell, rng);
  nn::Linear edge_head(view, "aux.edge", d, kPred, rng);
  for (const auto& [name, t] : model.store().with_prefix("graph.")) view.add(name, t);

  AdamConfig ac;
  ac.learning_rate = learning_rate;
  ac.warmup_steps = 1;
  Adam adam(ac);
  auto evaluate = [&](bool train) {
    std::vector<Tensor> nodes, edges;
    for (const auto& g : graphs) {
      const GraphEmbeddings emb = graph_embed(g, model.graph_tables(), model.graph_layers());
      nodes.push_back(emb.nodes);
      if (emb.num_edges() > 0) edges.push_back(emb.edges);
    }
    const Tensor nl = node_head(concat_rows(nodes));
    Tensor loss = add(add(cross_entropy(narrow_last(nl, 0, kCat), cat),
                          cross_entropy(narrow_last(nl, kCat, kColor), color)),
                      cross_entropy(narrow_last(nl, kCat + kColor, kCell), cell));
    Tensor el;
    if (!edges.empty()) {
      el = edge_head(concat_rows(edges));
      loss = add(loss, cross_entropy(el, pred));
    }
    if (train) {
      view.zero_grad();
      loss.backward();
      adam.step(view);
    } else {
      auto argmax = [](const Tensor& t, std::int64_t row, std::int64_t off, std::int64_t k) {
        const std::int64_t w = t.shape()[1];
        std::int64_t best = 0;
        for (std::int64_t c = 1; c < k; ++c)
          if (t.at(row * w + off + c) > t.at(row * w + off + best)) best = c;
        return best;
      };
      std::int64_t hit = 0;
      for (std::size_t r = 0; r < cat.size(); ++r) {
        const auto i = static_cast<std::int64_t>(r);
        hit += argmax(nl, i, 0, kCat) == cat[r] && argmax(nl, i, kCat, kColor) == color[r] &&
               argmax(nl, i, kCat + kColor, kCell) == cell[r];
      }
      report.node_accuracy = static_cast<double>(hit) / static_cast<double>(cat.size());
      hit = 0;
      for (std::size_t r = 0; r < pred.size(); ++r) hit += argmax(el, static_cast<std::int64_t>(r), 0, kPred) == pred[r];
      report.edge_accuracy = pred.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
    }
    return loss.item();
  };
  for (std::int64_t s = 0; s < steps; ++s) {
    const double l = evaluate(true);
    if (s == 0) report.initial_loss = l;
  }
  report.final_loss = evaluate(false);
  return report;
}

Trainer::Trainer(Model& model, std::int64_t stage, const TrainConfig& config, const std::vector<Sample>& data,
                 std::uint64_t seed)
    : model_(model),
      stage_(stage),
      config_(config),
      data_(data),
      rng_(seed),
      adam_(AdamConfig{config.learning_rate, config.warmup_steps, 0.9, 0.999, 1e-8}) {
  if (stage < 0 || stage > 2) throw ConfigError("stage index must be 0, 1 or 2");
  if (data.empty()) throw ConfigError("training set is empty");
  if (config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  const bool text_frozen = stage > 0 || !config.train_text;
  const bool graph_frozen = stage > 0 || !config.train_graph || !model.config().use_scene_graph;
  cache_conditioning_ = text_frozen && graph_frozen;
  configure_trainable();
}

void Trainer::configure_trainable() {
  ParamStore& store = model_.store();
  store.set_trainable("", false);
  store.set_trainable(stage_path(stage_) + ".", true);
  if (stage_ == 0) {
    store.set_trainable("cond.", true);
    if (config_.train_text) store.set_trainable("text.", true);
    if (config_.train_graph && model_.config().use_scene_graph) store.set_trainable("graph.", true);
  }
}

const EncodedCaption* Trainer::cached(const Sample& sample) {
  auto it = cache_.find(sample.caption);
  if (it == cache_.end()) it = cache_.emplace(sample.caption, model_.encode(sample.caption)).first;
  return &it->second;
}

double Trainer::step() {
  configure_trainable();
  ParamStore& store = model_.store();
  store.zero_grad();
  const DiffusionStage& stage = model_.stage(stage_);
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(config_.batch_size);
  for (std::int64_t b = 0; b < config_.batch_size; ++b) {
    const Sample& s = data_[rng_.uniform_int(static_cast<std::uint64_t>(data_.size()))];
    const ConditionalEmbeddings cond =
        cache_conditioning_ ? model_.condition(*cached(s)) : model_.condition(s.caption);
    const Tensor loss = training_loss(stage, stage_target(s, stage_), stage_low_input(s, stage_), cond, rng_);
    total += loss.item();
    scale(loss, w).backward();
  }
  adam_.step(store);
  store.clamp_min(".tau", kTauMin);
  return total * w;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.tensors = model_.store().all();
  adam_.export_state(ckpt.tensors);
  nlohmann::json meta;
  meta["kind"] = "train";
  meta["stage"] = stage_;
  meta["step"] = adam_.steps_taken();
  meta["rng"] = rng_.state();
  meta["model"] = nlohmann::json::parse(dump_model_config(model_.config()));
  ckpt.metadata = meta.dump();
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ckpt.metadata);
    if (meta.at("stage").get<std::int64_t>() != stage_)
      throw CheckpointError("checkpoint holds stage " + std::to_string(meta.at("stage").get<std::int64_t>()) +
                            ", trainer runs stage " + std::to_string(stage_));
    std::map<std::string, Tensor> params, moments;
    for (const auto& [k, v] : ckpt.tensors) (k.rfind("adam.", 0) == 0 ? moments : params).emplace(k, v);
    model_.store().load(params);
    adam_.import_state(moments, meta.at("step").get<std::int64_t>());
    rng_.set_state(meta.at("rng").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is malformed: ") + e.what());
  }
  cache_.clear();
}

double heldout_loss(const Model& model, std::int64_t stage, const std::vector<Sample>& samples, std::int64_t draws,
                    std::uint64_t seed) {
  if (samples.empty() || draws < 1) throw ConfigError("heldout_loss needs samples and draws >= 1");
  Rng rng(seed);
  const DiffusionStage& st = model.stage(stage);
  const std::int64_t T = st.schedule().steps();
  double total = 0.0;
  for (const auto& s : samples) {
    const ConditionalEmbeddings cond = model.condition(s.caption);
    const Tensor x0 = stage_target(s, stage);
    for (std::int64_t d = 0; d < draws; ++d) {
      const std::int64_t t = rng.uniform_int(1, T);
      const Tensor eps = standard_normal(rng, x0.shape());
      total += denoising_loss(st, x0, stage_low_input(s, stage), cond, t, eps).item();
    }
  }
  return total / static_cast<double>(samples.size() * static_cast<std::size_t>(draws));
}

}  // namespace scenediff
