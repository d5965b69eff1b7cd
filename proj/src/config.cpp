// SPDX-License-Identifier: Apache-2.0
#include "scenediff/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scenediff/errors.hpp"

namespace scenediff {

using nlohmann::json;

ModelConfig::ModelConfig() {
  const std::int64_t res[3] = {8, 16, 32};
  const std::int64_t patch[3] = {1, 2, 4};
  for (std::size_t s = 0; s < 3; ++s) {
    UNetConfig& u = stages[s];
    u.resolution = res[s];
    u.patch = patch[s];
    u.in_channels = s == 0 ? 3 : 6;
    u.out_channels = 3;
    u.base_dim = 16;
    u.merges = 1;
    u.num_block = 2;
    u.blocks_per_stage = 1;
    u.head_dim = 8;
    u.window = 4;
    u.mlp_ratio = 2;
  }
}

UNetConfig ModelConfig::stage(std::int64_t index) const {
  if (index < 0 || index > 2) throw ConfigError("stage index must be 0, 1 or 2");
  UNetConfig u = stages[static_cast<std::size_t>(index)];
  u.d_cond = d_cond;
  u.timesteps = timesteps;
  u.target = target;
  u.windowed = use_swin_unet;
  return u;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("model: " + msg);
  };
  need(text.d_text > 0 && text.layers >= 0 && text.heads > 0 && text.d_text % text.heads == 0,
       "text width must be a positive multiple of the head count");
  need(text.d_text % 2 == 0, "text width must be even");
  need(text.max_len > 0 && text.mlp_ratio > 0, "text settings must be positive");
  need(d_graph > 0 && graph_layers >= 0 && graph_hidden >= 0 && d_cond > 0, "non-positive width");
  need(d_cond % 2 == 0, "d_cond must be even");
  need(timesteps >= 1, "timesteps must be positive");
  for (std::int64_t s = 0; s < 3; ++s) {
    const UNetConfig u = stage(s);
    u.validate();
    need(u.in_channels == (s == 0 ? u.out_channels : 2 * u.out_channels),
         "stage " + std::to_string(s) + " channel layout does not match its role");
    if (s > 0) need(u.resolution % stages[static_cast<std::size_t>(s - 1)].resolution == 0, "resolution ladder");
  }
}

std::int64_t TrainConfig::total_steps(std::int64_t n) const {
  if (steps > 0) return steps;
  return epochs * ((n + batch_size - 1) / batch_size);
}

namespace {

// Reads known keys from an object and rejects anything else.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_unet(const json& j, UNetConfig& u, const std::string& where) {
  Reader r(j, where);
  r.get("resolution", u.resolution);
  r.get("patch", u.patch);
  r.get("in_channels", u.in_channels);
  r.get("out_channels", u.out_channels);
  r.get("base_dim", u.base_dim);
  r.get("merges", u.merges);
  r.get("num_block", u.num_block);
  r.get("blocks_per_stage", u.blocks_per_stage);
  r.get("head_dim", u.head_dim);
  r.get("window", u.window);
  r.get("mlp_ratio", u.mlp_ratio);
  r.finish();
}

json write_unet(const UNetConfig& u) {
  return {{"resolution", u.resolution}, {"patch", u.patch},         {"in_channels", u.in_channels},
          {"out_channels", u.out_channels}, {"base_dim", u.base_dim}, {"merges", u.merges},
          {"num_block", u.num_block},   {"blocks_per_stage", u.blocks_per_stage}, {"head_dim", u.head_dim},
          {"window", u.window},         {"mlp_ratio", u.mlp_ratio}};
}

void read_model(const json& j, ModelConfig& m) {
  Reader r(j, "model");
  r.get("d_text", m.text.d_text);
  r.get("text_layers", m.text.layers);
  r.get("text_heads", m.text.heads);
  r.get("text_max_len", m.text.max_len);
  r.get("text_mlp_ratio", m.text.mlp_ratio);
  r.get("d_graph", m.d_graph);
  r.get("graph_layers", m.graph_layers);
  r.get("graph_hidden", m.graph_hidden);
  r.get("d_cond", m.d_cond);
  r.get("timesteps", m.timesteps);
  std::string target = m.target == PredictionTarget::kEpsilon ? "epsilon" : "x0";
  r.get("target", target);
  if (target == "epsilon") m.target = PredictionTarget::kEpsilon;
  else if (target == "x0") m.target = PredictionTarget::kX0;
  else throw ConfigError("model.target must be 'epsilon' or 'x0'");
  r.get("use_scene_graph", m.use_scene_graph);
  r.get("use_swin_unet", m.use_swin_unet);
  if (const json* st = r.child("stages")) {
    if (!st->is_array() || st->size() != 3) throw ConfigError("model.stages must list 3 stages");
    for (std::size_t s = 0; s < 3; ++s) read_unet((*st)[s], m.stages[s], "model.stages[" + std::to_string(s) + "]");
  }
  r.finish();
}

json write_model(const ModelConfig& m) {
  json stages = json::array();
  for (const auto& u : m.stages) stages.push_back(write_unet(u));
  return {{"d_text", m.text.d_text},
          {"text_layers", m.text.layers},
          {"text_heads", m.text.heads},
          {"text_max_len", m.text.max_len},
          {"text_mlp_ratio", m.text.mlp_ratio},
          {"d_graph", m.d_graph},
          {"graph_layers", m.graph_layers},
          {"graph_hidden", m.graph_hidden},
          {"d_cond", m.d_cond},
          {"timesteps", m.timesteps},
          {"target", m.target == PredictionTarget::kEpsilon ? "epsilon" : "x0"},
          {"use_scene_graph", m.use_scene_graph},
          {"use_swin_unet", m.use_swin_unet},
          {"stages", stages}};
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const json doc = parse_json(text, "config");
  RunConfig c;
  Reader r(doc, "config");
  r.get("seed", c.seed);
  r.get("out", c.out);
  if (const json* d = r.child("dataset")) {
    Reader rd(*d, "dataset");
    rd.get("path", c.dataset.path);
    rd.get("seed", c.dataset.seed);
    rd.get("size", c.dataset.size);
    rd.get("heldout", c.dataset.heldout);
    rd.finish();
  }
  if (const json* m = r.child("model")) read_model(*m, c.model);
  if (const json* t = r.child("train")) {
    Reader rt(*t, "train");
    rt.get("learning_rate", c.train.learning_rate);
    rt.get("warmup_steps", c.train.warmup_steps);
    rt.get("batch_size", c.train.batch_size);
    rt.get("epochs", c.train.epochs);
    rt.get("steps", c.train.steps);
    rt.get("first_stage", c.train.first_stage);
    rt.get("last_stage", c.train.last_stage);
    rt.get("train_subset", c.train.train_subset);
    rt.get("train_text", c.train.train_text);
    rt.get("train_graph", c.train.train_graph);
    rt.get("graph_pretrain_steps", c.train.graph_pretrain_steps);
    rt.get("graph_pretrain_lr", c.train.graph_pretrain_lr);
    rt.get("checkpoint_every", c.train.checkpoint_every);
    rt.finish();
  }
  if (const json* s = r.child("sample")) {
    Reader rs(*s, "sample");
    rs.get("steps", c.sample.steps);
    rs.get("last_stage", c.sample.last_stage);
    rs.finish();
  }
  if (const json* e = r.child("eval")) {
    Reader re(*e, "eval");
    re.get("n", c.eval.n);
    re.get("feature_steps", c.eval.feature_steps);
    re.get("feature_lr", c.eval.feature_lr);
    re.get("loss_draws", c.eval.loss_draws);
    re.finish();
  }
  r.finish();

  c.model.validate();
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.dataset.size >= 1 && c.dataset.heldout >= 0 && c.dataset.heldout < c.dataset.size,
       "dataset: need 0 <= heldout < size");
  need(c.train.learning_rate > 0 && c.train.warmup_steps >= 0 && c.train.batch_size >= 1 && c.train.epochs >= 0 &&
           c.train.steps >= 0 && c.train.graph_pretrain_steps >= 0 && c.train.checkpoint_every >= 0 &&
           c.train.train_subset >= 0,
       "train: invalid optimizer settings");
  need(c.train.first_stage >= 0 && c.train.first_stage <= c.train.last_stage && c.train.last_stage <= 2,
       "train: stage range must satisfy 0 <= first_stage <= last_stage <= 2");
  need(c.sample.steps >= 1 && c.sample.steps <= c.model.timesteps, "sample.steps must be in [1, timesteps]");
  need(c.sample.last_stage >= 0 && c.sample.last_stage <= 2, "sample.last_stage must be 0, 1 or 2");
  need(c.eval.n >= 2, "eval.n must be at least 2");
  need(c.eval.loss_draws >= 1 && c.eval.feature_steps >= 0, "eval: invalid settings");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str());
}

std::string dump_run_config(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["out"] = c.out;
  doc["dataset"] = {{"path", c.dataset.path}, {"seed", c.dataset.seed}, {"size", c.dataset.size},
                    {"heldout", c.dataset.heldout}};
  doc["model"] = write_model(c.model);
  doc["train"] = {{"learning_rate", c.train.learning_rate},
                  {"warmup_steps", c.train.warmup_steps},
                  {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"steps", c.train.steps},
                  {"first_stage", c.train.first_stage},
                  {"last_stage", c.train.last_stage},
                  {"train_subset", c.train.train_subset},
                  {"train_text", c.train.train_text},
                  {"train_graph", c.train.train_graph},
                  {"graph_pretrain_steps", c.train.graph_pretrain_steps},
                  {"graph_pretrain_lr", c.train.graph_pretrain_lr},
                  {"checkpoint_every", c.train.checkpoint_every}};
  doc["sample"] = {{"steps", c.sample.steps}, {"last_stage", c.sample.last_stage}};
  doc["eval"] = {{"n", c.eval.n},
                 {"feature_steps", c.eval.feature_steps},
                 {"feature_lr", c.eval.feature_lr},
                 {"loss_draws", c.eval.loss_draws}};
  return doc.dump(2);
}

std::string dump_model_config(const ModelConfig& config) { return write_model(config).dump(); }

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig m;
  read_model(parse_json(text, "model config"), m);
  m.validate();
  return m;
}

}  // namespace scenediff
