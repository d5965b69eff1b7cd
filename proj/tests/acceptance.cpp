// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails. `acceptance 7 8` runs a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "json.hpp"
#include "scenediff/checkpoint.hpp"
#include "scenediff/gradsuite.hpp"
#include "scenediff/nn.hpp"
#include "scenediff/ops.hpp"
#include "scenediff/optim.hpp"
#include "scenediff/runner.hpp"
#include "scenediff/swin.hpp"

using namespace scenediff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  // Records a named check; a failed check fails the criterion.
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Tensor randn(Rng& rng, const Shape& shape, bool requires_grad = false) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor(shape, std::move(v), requires_grad);
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- 1
Outcome gradients() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& r : gradient_suite(1)) {
    o.check(r.passed(), r.layer + " rel err " + num(r.max_rel_error) + " >= " + num(r.tolerance));
    if (r.layer.find("end to end") != std::string::npos) o.note("end-to-end rel err " + num(r.max_rel_error));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.check(secs < 300, "runtime under 5 min");
  o.note("layers checked in " + num(secs) + " s");
  return o;
}

// ---------------------------------------------------------------- 2
Outcome attention_invariants() {
  Outcome o;
  Rng rng(2);
  const Shape s{3, 2, 6, 4};
  const Tensor q = randn(rng, s), k = randn(rng, s), v = randn(rng, s);
  const Tensor tau({2}, {0.07, 0.9});
  const Tensor bias = randn(rng, {2, 6, 6});
  const CosineAttention a = cosine_attention(q, k, v, tau, bias);
  double row_err = 0;
  bool in_range = true;
  for (std::int64_t r = 0; r < a.weights.numel() / 6; ++r) {
    double sum = 0;
    for (std::int64_t j = 0; j < 6; ++j) {
      const double w = a.weights.at(r * 6 + j);
      sum += w;
      in_range = in_range && w >= 0.0 && w <= 1.0;
    }
    row_err = std::max(row_err, std::abs(sum - 1.0));
  }
  o.check(row_err < 1e-6, "rows sum to 1 (err " + num(row_err) + ")");
  o.check(in_range, "weights in [0, 1]");

  // Per-row positive scaling of Q, then of K.
  std::vector<double> scales(static_cast<std::size_t>(q.numel() / 4));
  for (auto& c : scales) c = std::exp(3.0 * rng.uniform() - 1.5);
  auto scaled = [&](const Tensor& x) {
    std::vector<double> d(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= scales[i / 4];
    return Tensor(x.shape(), d);
  };
  const double dq = max_diff(cosine_attention(scaled(q), k, v, tau, bias).weights.data(), a.weights.data());
  const double dk = max_diff(cosine_attention(q, scaled(k), v, tau, bias).weights.data(), a.weights.data());
  o.check(dq < 1e-6, "Q row-scale invariance (" + num(dq) + ")");
  o.check(dk < 1e-6, "K row-scale invariance (" + num(dk) + ")");

  // tau floor under 1000 optimizer steps on random losses.
  ParamStore store;
  SwinBlockConfig c;
  c.dim = 8;
  c.heads = 2;
  c.window = 2;
  c.mlp_ratio = 2;
  SwinBlock block(store, "b", c, rng);
  AdamConfig ac;
  ac.learning_rate = 0.02;
  ac.warmup_steps = 1;
  Adam adam(ac);
  double min_tau = INFINITY;
  for (int step = 0; step < 1000; ++step) {
    store.zero_grad();
    const Tensor z = randn(rng, {4, 4, 8}), w = randn(rng, {4, 4, 8});
    const Tensor push = randn(rng, {2});
    add(sum(mul(block.forward(z), w)), sum(mul(block.tau, push))).backward();
    adam.step(store);
    store.clamp_min(".tau", kTauMin);
    for (double t : block.tau.data()) min_tau = std::min(min_tau, t);
  }
  o.check(min_tau >= 0.01, "tau >= 0.01 after 1000 steps (min " + num(min_tau) + ")");
  o.note("row err " + num(row_err) + ", min tau " + num(min_tau));
  return o;
}

// ---------------------------------------------------------------- 3
using Vec = std::vector<double>;

Vec linear_oracle(const nn::Linear& l, const Vec& x) {
  Vec y(static_cast<std::size_t>(l.out_features));
  for (std::int64_t j = 0; j < l.out_features; ++j) {
    double acc = l.bias.defined() ? l.bias.at(j) : 0.0;
    for (std::int64_t i = 0; i < l.in_features; ++i) acc += x[static_cast<std::size_t>(i)] * l.weight.at(i * l.out_features + j);
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

Vec table_row(const Tensor& t, std::int64_t r) {
  const auto d = t.shape()[1];
  return {t.data().begin() + r * d, t.data().begin() + (r + 1) * d};
}

struct GraphRows {
  std::vector<Vec> nodes, edges;
};

// Per-triple evaluation from raw weights with explicit candidate lists.
GraphRows graph_oracle(const SceneGraph& g, const GraphEmbeddingTables& tables, const std::vector<GraphConvLayer>& layers) {
  GraphRows cur;
  for (const auto& obj : g.objects) {
    Vec v = table_row(tables.category, grammar::category_id(obj.category));
    for (const auto& a : obj.attributes) {
      const Vec r = table_row(tables.attribute, grammar::color_id(a));
      for (std::size_t j = 0; j < v.size(); ++j) v[j] += r[j] / static_cast<double>(obj.attributes.size());
    }
    cur.nodes.push_back(v);
  }
  for (const auto& e : g.edges) cur.edges.push_back(table_row(tables.predicate, grammar::predicate_id(e.predicate)));
  for (const auto& layer : layers) {
    const auto d = static_cast<std::size_t>(layer.d_out());
    std::vector<std::vector<Vec>> pool(g.objects.size());
    GraphRows next;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
      const auto s = static_cast<std::size_t>(g.edges[k].subject), ob = static_cast<std::size_t>(g.edges[k].object);
      Vec triple = cur.nodes[s];
      triple.insert(triple.end(), cur.edges[k].begin(), cur.edges[k].end());
      triple.insert(triple.end(), cur.nodes[ob].begin(), cur.nodes[ob].end());
      Vec h = linear_oracle(layer.fc1, triple);
      for (auto& x : h) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
      const Vec c = linear_oracle(layer.fc2, h);
      pool[s].emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(d));
      next.edges.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(d), c.begin() + static_cast<std::ptrdiff_t>(2 * d));
      pool[ob].emplace_back(c.begin() + static_cast<std::ptrdiff_t>(2 * d), c.end());
    }
    for (std::size_t i = 0; i < g.objects.size(); ++i) {
      if (pool[i].empty()) {
        next.nodes.push_back(linear_oracle(layer.isolated, cur.nodes[i]));
        continue;
      }
      Vec acc(d, 0.0);
      for (const auto& c : pool[i])
        for (std::size_t j = 0; j < d; ++j) acc[j] += c[j] / static_cast<double>(pool[i].size());
      next.nodes.push_back(acc);
    }
    cur = next;
  }
  return cur;
}

SceneGraph random_graph(Rng& rng) {
  SceneGraph g;
  const auto n = 1 + static_cast<std::int64_t>(rng.uniform_int(std::uint64_t{4}));
  for (std::int64_t i = 0; i < n; ++i) {
    SceneObject obj{std::string(grammar::kCategories[rng.uniform_int(std::uint64_t{3})]), {}};
    const auto na = rng.uniform_int(std::uint64_t{3});
    for (std::uint64_t a = 0; a < na; ++a) obj.attributes.emplace_back(grammar::kColors[rng.uniform_int(std::uint64_t{3})]);
    g.objects.push_back(obj);
  }
  if (n > 1) {
    const auto ne = rng.uniform_int(std::uint64_t{5});
    for (std::uint64_t k = 0; k < ne; ++k) {
      const auto s = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      auto ob = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
      if (ob >= s) ++ob;
      g.edges.push_back({s, std::string(grammar::kPredicates[rng.uniform_int(std::uint64_t{4})]), ob});
    }
  }
  return g;
}

double rows_diff(const Tensor& t, std::int64_t r, const Vec& v) { return max_diff(table_row(t, r), v); }

Outcome graph_invariants() {
  Outcome o;
  ParamStore store;
  Rng rng(3);
  GraphEmbeddingTables tables(store, "g.tables", 6, rng);
  std::vector<GraphConvLayer> layers;
  layers.emplace_back(store, "g.layer0", 6, 6, 10, rng);
  layers.emplace_back(store, "g.layer1", 6, 6, 10, rng);

  double oracle_err = 0, perm_err = 0, order_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const SceneGraph g = random_graph(rng);
    const GraphEmbeddings e = graph_embed(g, tables, layers);
    const GraphRows ref = graph_oracle(g, tables, layers);
    for (std::size_t i = 0; i < ref.nodes.size(); ++i)
      oracle_err = std::max(oracle_err, rows_diff(e.nodes, static_cast<std::int64_t>(i), ref.nodes[i]));
    for (std::size_t k = 0; k < ref.edges.size(); ++k)
      oracle_err = std::max(oracle_err, rows_diff(e.edges, static_cast<std::int64_t>(k), ref.edges[k]));

    // Node relabelling: outputs follow the permutation.
    std::vector<std::int64_t> perm(g.objects.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(static_cast<std::uint64_t>(i))]);
    SceneGraph p = g;
    for (std::size_t i = 0; i < perm.size(); ++i) p.objects[static_cast<std::size_t>(perm[i])] = g.objects[i];
    for (auto& edge : p.edges) edge.subject = perm[static_cast<std::size_t>(edge.subject)], edge.object = perm[static_cast<std::size_t>(edge.object)];
    const GraphEmbeddings ep = graph_embed(p, tables, layers);
    for (std::size_t i = 0; i < perm.size(); ++i)
      perm_err = std::max(perm_err, max_diff(table_row(ep.nodes, perm[i]), table_row(e.nodes, static_cast<std::int64_t>(i))));

    // Edge reordering: node outputs unchanged, edge outputs follow.
    if (g.edges.size() > 1) {
      SceneGraph r = g;
      std::vector<std::size_t> order(g.edges.size());
      std::iota(order.begin(), order.end(), 0);
      std::reverse(order.begin(), order.end());
      for (std::size_t k = 0; k < order.size(); ++k) r.edges[k] = g.edges[order[k]];
      const GraphEmbeddings er = graph_embed(r, tables, layers);
      order_err = std::max(order_err, max_diff(er.nodes.data(), e.nodes.data()));
      for (std::size_t k = 0; k < order.size(); ++k)
        order_err = std::max(order_err, max_diff(table_row(er.edges, static_cast<std::int64_t>(k)),
                                                 table_row(e.edges, static_cast<std::int64_t>(order[k]))));
    }
  }
  o.check(oracle_err < 1e-6, "brute-force oracle (" + num(oracle_err) + ")");
  o.check(perm_err < 1e-6, "permutation equivariance (" + num(perm_err) + ")");
  o.check(order_err < 1e-6, "edge-order invariance (" + num(order_err) + ")");
  o.note("200 graphs; oracle " + num(oracle_err) + ", perm " + num(perm_err) + ", order " + num(order_err));
  return o;
}

// ---------------------------------------------------------------- 4
Outcome diffusion_correctness() {
  Outcome o;
  Rng rng(4);
  const NoiseSchedule sched = NoiseSchedule::scaled_linear(50);
  const Tensor x0 = generate(4, 1)[0].images[0];

  // Closed form against the step-by-step chain's coefficients.
  double a = 1.0, var = 0.0, comp_err = 0.0;
  for (std::int64_t t = 1; t <= 50; ++t) {
    a *= std::sqrt(1.0 - sched.beta(t));
    var = (1.0 - sched.beta(t)) * var + sched.beta(t);
    const Tensor eps = standard_normal(rng, x0.shape());
    const Tensor z = forward_noise(x0, t, eps, sched);
    for (std::int64_t i = 0; i < z.numel(); ++i)
      comp_err = std::max(comp_err, std::abs(z.at(i) - (a * x0.at(i) + std::sqrt(var) * eps.at(i))));
  }
  o.check(comp_err < 1e-5, "closed form vs iterative (" + num(comp_err) + ")");

  // Variance preservation on unit-variance data.
  double worst = 0.0;
  for (std::int64_t t : {1, 10, 25, 50}) {
    double s = 0, s2 = 0, n = 0;
    for (int draw = 0; draw < 1000; ++draw) {
      const Tensor x = standard_normal(rng, {8, 8, 3});
      const Tensor z = forward_noise(x, t, standard_normal(rng, {8, 8, 3}), sched);
      for (double v : z.data()) s += v, s2 += v * v, n += 1;
    }
    const double m = s / n;
    worst = std::max(worst, std::abs((s2 / n - m * m) - 1.0));
  }
  o.check(worst < 0.05, "variance within 5% (" + num(worst) + ")");

  // Oracle epsilon predictor through the ancestral sampler.
  const SamplingPlan plan = make_sampling_plan(sched, 50);
  auto oracle = [&](const Tensor& z, std::int64_t t) {
    std::vector<double> e(static_cast<std::size_t>(z.numel()));
    const double ab = sched.alpha_bar(t);
    for (std::size_t k = 0; k < e.size(); ++k)
      e[k] = (z.at(static_cast<std::int64_t>(k)) - std::sqrt(ab) * x0.at(static_cast<std::int64_t>(k))) / std::sqrt(1.0 - ab);
    return Tensor(z.shape(), e);
  };
  const Tensor rec = sample_loop(oracle, {8, 8, 3}, plan, PredictionTarget::kEpsilon, rng);
  double se = 0;
  for (std::int64_t i = 0; i < rec.numel(); ++i) se += (rec.at(i) - x0.at(i)) * (rec.at(i) - x0.at(i));
  const double rmse = std::sqrt(se / static_cast<double>(rec.numel()));
  o.check(rmse < 0.05, "oracle reconstruction RMSE (" + num(rmse) + ")");
  o.note("composition " + num(comp_err) + ", variance dev " + num(worst) + ", oracle RMSE " + num(rmse));
  return o;
}

// ---------------------------------------------------------------- 5
Outcome shapes_and_structure() {
  Outcome o;
  Rng rng(5);
  ModelConfig mc;
  mc.text = {8, 1, 2, 16, 2};
  mc.d_graph = 8;
  mc.graph_hidden = 8;
  mc.d_cond = 8;
  mc.timesteps = 50;
  for (auto& s : mc.stages) s.base_dim = 8, s.head_dim = 4;
  Model model(mc, 5);
  const std::string caption = "a red circle left of a blue square above a green triangle";
  const ConditionalEmbeddings cond = model.condition(caption);
  for (std::int64_t s = 0; s < 3; ++s) {
    const auto& st = model.stage(s);
    const auto r = st.resolution();
    const Tensor low = s == 0 ? Tensor() : randn(rng, {st.low_resolution(), st.low_resolution(), 3});
    const Tensor y = st.predict(randn(rng, {r, r, 3}), 7, cond, low);
    o.check(y.shape() == Shape({r, r, 3}), "unet output at " + std::to_string(r) + " px");
  }

  ParamStore store;
  PatchMerge merge(store, "m", 6, rng);
  PatchExpand expand(store, "e", 12, rng);
  const Tensor x = randn(rng, {8, 8, 6});
  const Tensor m = merge.forward(x);
  o.check(m.shape() == Shape({4, 4, 12}), "patch_merge (H,W,C) -> (H/2,W/2,2C)");
  o.check(expand.forward(m).shape() == x.shape(), "patch_expand inverts the shape");

  bool exact = true;
  for (std::int64_t shift : {0, 1, 2}) {
    const WindowConfig wc{4, shift};
    const Tensor img = randn(rng, {8, 8, 5});
    const Tensor back = window_reverse(window_partition(img, wc), 8, 8, wc);
    exact = exact && std::equal(back.data().begin(), back.data().end(), img.data().begin());
  }
  o.check(exact, "window partition round trip bit-exact");

  o.check(cond.text_rows > 0 && cond.object_rows == 3 && cond.relation_rows == 2 &&
              cond.seq.shape()[0] == cond.text_rows + 5,
          "segment sizes text, objects, relations");
  const EncodedCaption enc = model.encode(caption);
  // Segment order: text rows, then objects, then relations, each via its adapter.
  auto seg_err = [&](const char* name, const Tensor& rows, std::int64_t start) {
    const Tensor w = model.store().get(std::string("cond.") + name + ".weight");
    const Tensor b = model.store().get(std::string("cond.") + name + ".bias");
    const Tensor ref = add_bcast(matmul(rows, w), b);
    return max_diff(ref.data(), Vec(cond.seq.data().begin() + start * 8,
                                    cond.seq.data().begin() + (start + rows.shape()[0]) * 8));
  };
  const double e_text = seg_err("text", enc.text.seq, 0);
  const double e_obj = seg_err("object", enc.graph.nodes, cond.text_rows);
  const double e_rel = seg_err("relation", enc.graph.edges, cond.text_rows + cond.object_rows);
  o.check(e_text < 1e-12 && e_obj < 1e-12 && e_rel < 1e-12, "rows ordered text, objects, relations");

  // Masked rows are inert: changing them leaves the UNet output unchanged.
  ConditionalEmbeddings masked = cond;
  std::fill(masked.mask.begin() + cond.text_rows, masked.mask.end(), 0);
  ConditionalEmbeddings scrambled = masked;
  std::vector<double> seq(cond.seq.data().begin(), cond.seq.data().end());
  for (std::size_t i = static_cast<std::size_t>(cond.text_rows * 8); i < seq.size(); ++i) seq[i] = 5.0 * rng.normal();
  scrambled.seq = Tensor(cond.seq.shape(), seq);
  const Tensor z = randn(rng, {8, 8, 3});
  const double inert = max_diff(model.stage(0).predict(z, 9, masked, Tensor()).data(),
                                model.stage(0).predict(z, 9, scrambled, Tensor()).data());
  o.check(inert < 1e-6, "masked rows inert (" + num(inert) + ")");
  o.note("segments " + std::to_string(cond.text_rows) + "/" + std::to_string(cond.object_rows) + "/" +
         std::to_string(cond.relation_rows) + ", masked-row effect " + num(inert));
  return o;
}

// ---------------------------------------------------------------- 6
GaussianStats diag_stats(const Vec& mu, const Vec& var) {
  GaussianStats s;
  s.dim = static_cast<std::int64_t>(mu.size());
  s.n = 10;
  s.mu = mu;
  s.sigma.assign(mu.size() * mu.size(), 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) s.sigma[i * mu.size() + i] = var[i];
  return s;
}

Outcome metric_fidelity() {
  Outcome o;
  Rng rng(6);
  const GaussianStats s = gaussian_stats(randn(rng, {50, 6}));
  const double self = fid(s, s);
  o.check(std::abs(self) < 1e-6, "fid(s, s) = 0 (" + num(self) + ")");
  double diag_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Vec ma(5), mb(5), va(5), vb(5);
    double expected = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      ma[i] = rng.normal(), mb[i] = rng.normal();
      va[i] = 0.1 + 2.0 * rng.uniform(), vb[i] = 0.1 + 2.0 * rng.uniform();
      expected += (ma[i] - mb[i]) * (ma[i] - mb[i]) + va[i] + vb[i] - 2.0 * std::sqrt(va[i] * vb[i]);
    }
    diag_err = std::max(diag_err, std::abs(fid(diag_stats(ma, va), diag_stats(mb, vb)) - expected));
  }
  o.check(diag_err < 1e-6, "diagonal closed form (" + num(diag_err) + ")");

  const std::int64_t classes = 7;
  std::vector<double> onehot(static_cast<std::size_t>(classes * classes), 0.0);
  for (std::int64_t i = 0; i < classes; ++i) onehot[static_cast<std::size_t>(i * classes + i)] = 1.0;
  const double is_onehot = inception_score(Tensor({classes, classes}, onehot));
  o.check(std::abs(is_onehot - classes) < 1e-9, "one-hot IS equals class count (" + num(is_onehot) + ")");
  bool bounded = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(static_cast<std::size_t>(12 * classes));
    for (std::size_t r = 0; r < 12; ++r) {
      double z = 0;
      for (std::size_t c = 0; c < static_cast<std::size_t>(classes); ++c) z += p[r * classes + c] = std::exp(3.0 * rng.normal());
      for (std::size_t c = 0; c < static_cast<std::size_t>(classes); ++c) p[r * classes + c] /= z;
    }
    const double is = inception_score(Tensor({12, classes}, p));
    bounded = bounded && is >= 1.0 - 1e-12 && is <= classes + 1e-12;
  }
  o.check(bounded, "IS within [1, classes]");
  o.note("fid(s,s) " + num(self) + ", diagonal err " + num(diag_err) + ", one-hot IS " + num(is_onehot));
  return o;
}

// ---------------------------------------------------------------- 7
RunConfig desk_profile(std::uint64_t seed) {
  RunConfig rc;
  rc.seed = seed;
  rc.model.target = PredictionTarget::kX0;
  rc.train.learning_rate = 1e-3;
  rc.train.warmup_steps = 100;
  rc.train.batch_size = 8;
  rc.train.first_stage = 0;
  rc.train.last_stage = 0;
  rc.eval.loss_draws = 4;
  return rc;
}

Outcome overfit() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Sample> train = generate(7, 16);
  RunConfig rc = desk_profile(7);
  rc.train.steps = 2000;
  Model model(rc.model, rc.seed);
  const Model untrained(rc.model, rc.seed);
  const double initial = heldout_loss(model, 0, train, 4, 0x0f17);
  train_model(model, rc, train, {});
  const double final_loss = heldout_loss(model, 0, train, 4, 0x0f17);
  o.check(final_loss <= 0.1 * initial, "training loss " + num(final_loss) + " <= 10% of " + num(initial));

  const FeatureEvaluator evaluator(generate(70, 400), 600, 3e-3, 70);
  std::vector<std::string> captions;
  for (const auto& s : train) captions.push_back(s.caption);
  const auto reals = images_at(train, 0);
  const double fid_trained = evaluator.fid_proxy(sample_captions(model, captions, 50, 0, 99), reals);
  const double fid_random = evaluator.fid_proxy(sample_captions(untrained, captions, 50, 0, 99), reals);
  o.check(fid_random >= 2.0 * fid_trained, "FID-proxy " + num(fid_trained) + " vs random init " + num(fid_random));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.check(secs < 1800, "runtime under 30 min");
  o.note("loss " + num(initial) + " -> " + num(final_loss) + ", FID-proxy " + num(fid_random) + " -> " +
         num(fid_trained));
  return o;
}

// ---------------------------------------------------------------- 8
Outcome ablation_direction() {
  Outcome o;
  double sum_graph = 0, sum_masked = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto all = generate(seed, 1048);
    Dataset data;
    data.seed = seed;
    data.train.assign(all.begin(), all.begin() + 1000);
    data.heldout.assign(all.begin() + 1000, all.end());
    RunConfig rc = desk_profile(seed);
    rc.model.stages[0].base_dim = 32;
    rc.train.steps = 4000;
    auto rows = ablation_rows();
    AblationRow* full = nullptr;
    AblationRow* masked = nullptr;
    for (auto& r : rows) {
      if (r.label == "Swinv2-Imagen") full = &r;
      if (r.label == "Swinv2-Imagen_su") masked = &r;
    }
    run_ablation_row(*full, rc, data, nullptr);
    run_ablation_row(*masked, rc, data, nullptr);
    o.check(full->parameters == masked->parameters, "equal parameter counts");
    o.check(full->finite && masked->finite, "finite losses");
    sum_graph += full->heldout_loss;
    sum_masked += masked->heldout_loss;
    per_seed += (per_seed.empty() ? "" : ", ") + num(full->heldout_loss) + "/" + num(masked->heldout_loss);
    std::fprintf(stderr, "criterion 8 seed %llu: %s/%s\n", static_cast<unsigned long long>(seed),
                 num(full->heldout_loss).c_str(), num(masked->heldout_loss).c_str());
  }
  const double ratio = sum_graph / sum_masked;
  o.check(ratio <= 0.5, "mean held-out loss ratio " + num(ratio) + " <= 0.5");
  o.note("graph/masked per seed " + per_seed + "; ratio of means " + num(ratio));
  std::string published;
  for (const auto& r : ablation_rows()) published += (published.empty() ? "" : ", ") + r.label + " " + num(r.published_fid);
  o.note("published FID for context: " + published);
  return o;
}

// ---------------------------------------------------------------- 9
std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

int cli_run(const std::vector<std::string>& args) {
  std::vector<std::string> full{"scenediff"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream out, err;
  const int code = cli::run(full, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Outcome reproducibility() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "scenediff_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "data").string();
  o.check(cli_run({"generate-data", "--seed", "9", "--n", "24", "--heldout", "4", "--out", data}) == 0, "generate-data");
  const std::string config = (dir / "config.json").string();
  {
    std::ofstream f(config);
    f << R"({"seed": 21, "dataset": {"path": ")" << data << R"(", "size": 24, "heldout": 4},
      "model": {"d_text": 16, "text_heads": 2, "d_graph": 16, "graph_hidden": 16, "d_cond": 16, "timesteps": 100},
      "train": {"learning_rate": 0.001, "warmup_steps": 10, "batch_size": 4, "steps": 30,
                "graph_pretrain_steps": 20, "checkpoint_every": 10},
      "sample": {"steps": 10}})";
  }
  std::ofstream(dir / "captions.txt") << "a red circle left of a blue square\na green triangle below a red square\n";
  for (const char* run : {"a", "b"}) {
    const std::string out = (dir / run).string();
    o.check(cli_run({"train", "--config", config, "--out", out}) == 0, std::string("train ") + run);
    o.check(cli_run({"sample", "--config", config, "--out", out, "--captions", (dir / "captions.txt").string()}) == 0,
            std::string("sample ") + run);
  }
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext != ".ckpt" && ext != ".png" && ext != ".jsonl" && ext != ".json") continue;
    const fs::path other = dir / "b" / fs::relative(entry.path(), dir / "a");
    bool same = fs::exists(other);
    if (same && entry.path().filename() == "config.json") {
      // The run config records its own output directory.
      auto a = nlohmann::json::parse(slurp(entry.path())), b = nlohmann::json::parse(slurp(other));
      a.erase("out");
      b.erase("out");
      same = a == b;
    } else if (same) {
      same = slurp(entry.path()) == slurp(other);
    }
    o.check(same, "identical " + fs::relative(entry.path(), dir).string());
    ++compared;
  }
  o.check(compared >= 15, "artifact count");

  // Resume from a mid-stage checkpoint on disk: the next 10 losses match.
  const Dataset ds = load_dataset(data);
  const RunConfig rc = load_run_config(config);
  TrainConfig tc = rc.train;
  std::vector<double> straight, resumed;
  {
    Model m(rc.model, rc.seed);
    Trainer t(m, 0, tc, ds.train, 5);
    for (int i = 0; i < 7; ++i) t.step();
    save_checkpoint((dir / "mid.ckpt").string(), t.checkpoint());
    for (int i = 0; i < 10; ++i) straight.push_back(t.step());
  }
  {
    Model m(rc.model, rc.seed + 1);
    Trainer t(m, 0, tc, ds.train, 6);
    t.restore(load_checkpoint((dir / "mid.ckpt").string()));
    for (int i = 0; i < 10; ++i) resumed.push_back(t.step());
  }
  o.check(straight == resumed, "10 losses after resume bit-exact");
  o.note(std::to_string(compared) + " artifacts byte-identical across runs; resume losses match");
  fs::remove_all(dir);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradients},
      {2, "scaled cosine attention invariants", attention_invariants},
      {3, "graph convolution invariants", graph_invariants},
      {4, "diffusion correctness", diffusion_correctness},
      {5, "shape and structure", shapes_and_structure},
      {6, "metric fidelity", metric_fidelity},
      {7, "overfit experiment", overfit},
      {8, "ablation direction", ablation_direction},
      {9, "reproducibility", reproducibility},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("criterion %d %s: %s (%s; %.1f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
