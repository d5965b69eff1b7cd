// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "scenediff/checkpoint.hpp"
#include "scenediff/datagen.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/gradsuite.hpp"
#include "scenediff/image_io.hpp"
#include "scenediff/runner.hpp"

namespace scenediff::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, CommonOptions& o, bool config_required) {
  auto* c = app->add_option("--config", o.config, "Run configuration (JSON)");
  if (config_required) c->required();
  app->add_option("--seed", o.seed, "Seed; overrides the config");
  app->add_option("--out", o.out, "Output directory; overrides the config");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  return c;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

Dataset require_dataset(const RunConfig& c) {
  if (!fs::exists(fs::path(c.dataset.path) / "manifest.json"))
    throw IoError("dataset not found at " + c.dataset.path + " (run generate-data first)");
  return load_dataset(c.dataset.path);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int cmd_generate(const CommonOptions& o, std::optional<std::int64_t> n, std::optional<std::int64_t> heldout,
                 std::ostream& out) {
  RunConfig c = resolve(o);
  const std::uint64_t seed = o.seed ? *o.seed : c.dataset.seed;
  const std::string dir = o.out.empty() ? c.dataset.path : o.out;
  const std::int64_t size = n.value_or(c.dataset.size);
  const std::int64_t hold = heldout.value_or(c.dataset.heldout);
  if (hold < 0 || hold >= size) throw ConfigError("need 0 <= heldout < n");
  write_dataset(dir, generate(seed, size), hold, seed);
  out << "wrote " << size << " samples (" << hold << " held out) to " << dir << "\n";
  return kOk;
}

int cmd_train(const CommonOptions& o, const std::string& resume_path, const std::string& init_path,
              std::ostream& out) {
  const RunConfig c = resolve(o);
  const Dataset data = require_dataset(c);
  const auto train = training_subset(data, c.train);
  const fs::path dir(c.out);
  make_dir(dir);
  write_text(dir / "config.json", dump_run_config(c) + "\n");

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(resume_path);
  std::unique_ptr<Model> model;
  if (!init_path.empty()) {
    model = load_model(load_checkpoint(init_path));
    if (dump_model_config(model->config()) != dump_model_config(c.model))
      throw CheckpointError("initial checkpoint was built from a different model config");
  } else {
    model = std::make_unique<Model>(c.model, c.seed);
  }

  std::ofstream log(dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogEntry& e) {
    json row;
    row["stage"] = e.stage;
    row["step"] = e.step;
    row["loss"] = e.loss;
    row["lr"] = e.learning_rate;
    log << row.dump() << '\n';
  };
  const std::int64_t total = c.train.total_steps(static_cast<std::int64_t>(train.size()));
  hooks.on_checkpoint = [&](const Trainer& t) {
    const Checkpoint ckpt = t.checkpoint();
    const std::string stem = "stage" + std::to_string(t.stage());
    if (t.steps_taken() == total) save_checkpoint((dir / (stem + ".ckpt")).string(), ckpt);
    else save_checkpoint((dir / (stem + "_step" + std::to_string(t.steps_taken()) + ".ckpt")).string(), ckpt);
    out << role_name(model->stage(t.stage()).role()) << " step " << t.steps_taken() << "/" << total << "\n";
  };
  train_model(*model, c, train, hooks, resume ? &*resume : nullptr);
  log.flush();
  save_checkpoint((dir / "model.ckpt").string(), model_checkpoint(*model));
  out << "wrote " << (dir / "model.ckpt").string() << "\n";
  return kOk;
}

std::unique_ptr<Model> model_from(const RunConfig& c, const std::string& checkpoint) {
  const std::string path = checkpoint.empty() ? (fs::path(c.out) / "model.ckpt").string() : checkpoint;
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
  return load_model(load_checkpoint(path));
}

int cmd_sample(const CommonOptions& o, const std::string& checkpoint, const std::string& captions_path,
               std::optional<std::int64_t> steps, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve(o);
  const auto model = model_from(c, checkpoint);
  std::ifstream in(captions_path);
  if (!in) throw IoError("cannot open captions file " + captions_path);
  const fs::path dir = fs::path(c.out) / "samples";
  make_dir(dir);
  const std::int64_t sample_steps = steps.value_or(c.sample.steps);
  if (sample_steps < 1 || sample_steps > model->config().timesteps) throw ConfigError("steps must be in [1, T]");

  Rng root(c.seed);
  json rows = json::array();
  std::string line;
  std::int64_t index = 0, failures = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Rng rng = root.fork(static_cast<std::uint64_t>(index));
    json row;
    row["line"] = index + 1;
    row["caption"] = line;
    try {
      const auto images = model->sample(line, sample_steps, c.sample.last_stage, rng);
      json paths;
      for (const auto& img : images) {
        const auto res = img.shape()[0];
        const std::string name = std::to_string(index) + "_" + std::to_string(res) + ".png";
        write_png((dir / name).string(), img);
        paths[std::to_string(res)] = name;
      }
      row["images"] = paths;
    } catch (const ParseError& e) {
      row["error"] = {{"category", e.category()}, {"message", e.what()}, {"token", e.token()},
                      {"position", e.position()}};
      err << "line " << index + 1 << ": error[" << e.category() << "]: " << e.what() << "\n";
      ++failures;
    } catch (const ShapeError& e) {
      row["error"] = {{"category", e.category()}, {"message", e.what()}};
      err << "line " << index + 1 << ": error[" << e.category() << "]: " << e.what() << "\n";
      ++failures;
    }
    rows.push_back(row);
    ++index;
  }
  json manifest;
  manifest["seed"] = c.seed;
  manifest["steps"] = sample_steps;
  manifest["samples"] = rows;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "sampled " << index - failures << " of " << index << " captions into " << dir.string() << "\n";
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint, std::optional<std::int64_t> n_opt,
                 bool reals_only, std::ostream& out) {
  const RunConfig c = resolve(o);
  const std::int64_t n = n_opt.value_or(c.eval.n);
  if (n < 2) throw ConfigError("evaluate needs n >= 2");
  const Dataset data = require_dataset(c);
  if (data.heldout.empty()) throw ConfigError("dataset has no held-out split");
  const FeatureEvaluator evaluator(data.train, c.eval.feature_steps, c.eval.feature_lr, c.seed);
  std::vector<Tensor> reals;
  std::vector<std::string> captions;
  for (std::int64_t i = 0; i < n; ++i) {
    const Sample& s = data.heldout[static_cast<std::size_t>(i) % data.heldout.size()];
    reals.push_back(s.images[0]);
    captions.push_back(s.caption);
  }
  json report;
  std::vector<Tensor> fake;
  if (reals_only) {
    fake = reals;
    report["stage"] = "reals";
  } else {
    const auto model = model_from(c, checkpoint);
    fake = sample_captions(*model, captions, c.sample.steps, c.sample.last_stage, c.seed);
    report["stage"] = role_name(model->stage(c.sample.last_stage).role());
    report["heldout_loss"] = heldout_loss(*model, 0, data.heldout, c.eval.loss_draws, c.seed);
  }
  report["fid_proxy"] = evaluator.fid_proxy(fake, reals);
  report["is_proxy"] = evaluator.is_proxy(fake);
  report["n_samples"] = n;
  report["seed"] = c.seed;
  make_dir(c.out);
  write_text(fs::path(c.out) / "eval_report.json", report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kOk;
}

int cmd_ablate(const CommonOptions& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  const Dataset data = require_dataset(c);
  const FeatureEvaluator evaluator(data.train, c.eval.feature_steps, c.eval.feature_lr, c.seed);
  auto rows = ablation_rows();
  json table = json::array();
  for (auto& row : rows) {
    run_ablation_row(row, c, data, &evaluator);
    out << row.label << ": held-out loss " << fmt(row.heldout_loss) << ", FID-proxy " << fmt(row.fid_proxy) << "\n";
    table.push_back({{"label", row.label},
                     {"use_scene_graph", row.use_scene_graph},
                     {"use_swin_unet", row.use_swin_unet},
                     {"heldout_loss", row.heldout_loss},
                     {"fid_proxy", row.fid_proxy},
                     {"final_train_loss", row.final_train_loss},
                     {"finite", row.finite},
                     {"parameters", row.parameters},
                     {"published_fid", row.published_fid}});
  }
  make_dir(c.out);
  write_text(fs::path(c.out) / "ablation.json", json{{"seed", c.seed}, {"rows", table}}.dump(2) + "\n");
  const std::string md = ablation_table_markdown(rows);
  write_text(fs::path(c.out) / "ablation.md", md);
  out << md;
  for (const auto& r : rows)
    if (!r.finite) throw NumericError("row " + r.label + " diverged");
  return kOk;
}

int cmd_grad_check(const CommonOptions& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  const auto results = gradient_suite(c.seed);
  bool ok = true;
  json rows = json::array();
  for (const auto& r : results) {
    out << (r.passed() ? "ok   " : "FAIL ") << r.layer << ": max relative error " << fmt(r.max_rel_error)
        << " (tolerance " << r.tolerance << ", worst " << r.worst << ")\n";
    rows.push_back({{"layer", r.layer}, {"max_rel_error", r.max_rel_error}, {"tolerance", r.tolerance},
                    {"worst", r.worst}, {"passed", r.passed()}});
    ok = ok && r.passed();
  }
  if (!o.out.empty()) {
    make_dir(o.out);
    write_text(fs::path(o.out) / "gradcheck.json", rows.dump(2) + "\n");
  }
  return ok ? kOk : kCheckFailed;
}

int exit_code_for(const Error& e) {
  const std::string cat = e.category();
  if (cat == "config") return kConfig;
  if (cat == "io") return kIo;
  if (cat == "parse") return kParse;
  if (cat == "schema") return kSchema;
  if (cat == "shape") return kShape;
  if (cat == "numeric") return kNumeric;
  if (cat == "checkpoint") return kCheckpoint;
  return kGeneric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scene-graph conditioned cascaded diffusion on a synthetic shapes world"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, sample_o, eval_o, ablate_o, grad_o;
  std::optional<std::int64_t> gen_n, gen_heldout, sample_steps, eval_n;
  std::string resume, init, sample_ckpt, captions, eval_ckpt;
  bool reals_only = false;

  auto* gen = app.add_subcommand("generate-data", "Render the synthetic captioned dataset");
  add_common(gen, gen_o, false);
  gen->add_option("--n", gen_n, "Number of samples");
  gen->add_option("--heldout", gen_heldout, "Samples in the held-out split");

  auto* train = app.add_subcommand("train", "Train the cascade stages");
  add_common(train, train_o, true);
  train->add_option("--resume", resume, "Continue from a stage checkpoint");
  train->add_option("--init", init, "Start from a model checkpoint");

  auto* sample = app.add_subcommand("sample", "Generate images for a file of captions");
  add_common(sample, sample_o, true);
  sample->add_option("--checkpoint", sample_ckpt, "Model checkpoint (default <out>/model.ckpt)");
  sample->add_option("--captions", captions, "One caption per line")->required();
  sample->add_option("--steps", sample_steps, "Reverse steps per stage");

  auto* evaluate = app.add_subcommand("evaluate", "FID/IS proxies on held-out captions");
  add_common(evaluate, eval_o, true);
  evaluate->add_option("--checkpoint", eval_ckpt, "Model checkpoint (default <out>/model.ckpt)");
  evaluate->add_option("--n", eval_n, "Number of samples");
  evaluate->add_flag("--reals", reals_only, "Score held-out reals against themselves");

  auto* ablate = app.add_subcommand("ablate", "Train and score the four ablation rows");
  add_common(ablate, ablate_o, true);

  auto* grad = app.add_subcommand("grad-check", "Finite-difference checks of every layer");
  add_common(grad, grad_o, false);

  std::vector<std::string> argv_store = args.empty() ? std::vector<std::string>{"scenediff"} : args;
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_o, gen_n, gen_heldout, out);
    if (*train) return cmd_train(train_o, resume, init, out);
    if (*sample) return cmd_sample(sample_o, sample_ckpt, captions, sample_steps, out, err);
    if (*evaluate) return cmd_evaluate(eval_o, eval_ckpt, eval_n, reals_only, out);
    if (*ablate) return cmd_ablate(ablate_o, out);
    if (*grad) return cmd_grad_check(grad_o, out);
  } catch (const Error& e) {
    err << "error[" << e.category() << "]: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return kGeneric;
  }
  return kUsage;
}

}  // namespace scenediff::cli
