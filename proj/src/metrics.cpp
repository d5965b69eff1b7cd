// SPDX-License-Identifier: Apache-2.0
#include "scenediff/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/optim.hpp"

namespace scenediff {
namespace {

using Matrix = Eigen::MatrixXd;

Matrix as_matrix(const GaussianStats& s) {
  Matrix m(s.dim, s.dim);
  for (std::int64_t i = 0; i < s.dim; ++i)
    for (std::int64_t j = 0; j < s.dim; ++j) m(i, j) = s.sigma[static_cast<std::size_t>(i * s.dim + j)];
  return m;
}

Eigen::SelfAdjointEigenSolver<Matrix> symmetric_eigen(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (m + m.transpose()));
}

}  // namespace

GaussianStats gaussian_stats(const Tensor& features) {
  if (features.ndim() != 2) throw ShapeError("gaussian_stats expects [n, d] features");
  const auto n = features.shape()[0], d = features.shape()[1];
  if (n < 2) throw ShapeError("gaussian_stats needs at least two samples");
  GaussianStats s;
  s.dim = d;
  s.n = n;
  s.mu.assign(static_cast<std::size_t>(d), 0.0);
  s.sigma.assign(static_cast<std::size_t>(d * d), 0.0);
  const auto x = features.data();
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t j = 0; j < d; ++j) s.mu[static_cast<std::size_t>(j)] += x[static_cast<std::size_t>(r * d + j)];
  for (auto& m : s.mu) m /= static_cast<double>(n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t i = 0; i < d; ++i) {
      const double di = x[static_cast<std::size_t>(r * d + i)] - s.mu[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < d; ++j)
        s.sigma[static_cast<std::size_t>(i * d + j)] += di * (x[static_cast<std::size_t>(r * d + j)] - s.mu[static_cast<std::size_t>(j)]);
    }
  for (auto& v : s.sigma) v /= static_cast<double>(n - 1);
  return s;
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim != b.dim) throw ShapeError("fid: feature dimensions differ");
  double mean_term = 0.0;
  for (std::int64_t i = 0; i < a.dim; ++i) {
    const double d = a.mu[static_cast<std::size_t>(i)] - b.mu[static_cast<std::size_t>(i)];
    mean_term += d * d;
  }
  const Matrix sa = as_matrix(a), sb = as_matrix(b);
  const auto ea = symmetric_eigen(sa);
  const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix sa_half = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  const auto em = symmetric_eigen(sa_half * sb * sa_half);
  const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::max(0.0, mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt);
}

double inception_score(const Tensor& probs) {
  if (probs.ndim() != 2) throw ShapeError("inception_score expects [n, classes]");
  const auto n = probs.shape()[0], k = probs.shape()[1];
  const auto p = probs.data();
  std::vector<double> marginal(static_cast<std::size_t>(k), 0.0);
  for (std::int64_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::int64_t c = 0; c < k; ++c) {
      const double v = p[static_cast<std::size_t>(r * k + c)];
      if (v < 0.0) throw NumericError("inception_score: negative probability");
      s += v;
      marginal[static_cast<std::size_t>(c)] += v / static_cast<double>(n);
    }
    if (std::abs(s - 1.0) > 1e-4) throw NumericError("inception_score: row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
  double kl = 0.0;
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < k; ++c) {
      const double v = p[static_cast<std::size_t>(r * k + c)];
      if (v > 0.0) kl += v * std::log(v / marginal[static_cast<std::size_t>(c)]);
    }
  return std::exp(kl / static_cast<double>(n));
}

ToyFeatureNet::ToyFeatureNet(ParamStore& store, const std::string& path, Rng& rng, std::int64_t d_feat,
                             std::int64_t hidden)
    : path_(path),
      d_feat_(d_feat),
      fc1(store, path + ".fc1", kInput * kInput * 3, hidden, rng),
      fc2(store, path + ".fc2", hidden, d_feat, rng),
      head(store, path + ".head", d_feat, kClasses, rng) {}

std::int64_t ToyFeatureNet::label_of(const SceneGraph& graph) {
  if (graph.objects.empty() || graph.objects[0].attributes.empty()) throw SchemaError("feature label needs a colored first object");
  const int shape = grammar::category_id(graph.objects[0].category);
  const int color = grammar::color_id(graph.objects[0].attributes[0]);
  const int rel = graph.edges.empty() ? 4 : grammar::predicate_id(graph.edges[0].predicate);
  if (shape < 0 || color < 0 || rel < 0) throw SchemaError("feature label: symbol outside the grammar");
  return (shape * 3 + color) * 5 + rel;
}

Tensor ToyFeatureNet::batch(const std::vector<Tensor>& images) const {
  if (images.empty()) throw ShapeError("feature net needs at least one image");
  std::vector<double> rows;
  rows.reserve(images.size() * kInput * kInput * 3);
  for (const auto& im : images) {
    if (im.ndim() != 3 || im.shape()[0] % kInput != 0 || im.shape()[2] != 3)
      throw ShapeError("feature net expects [8k, 8k, 3] images, got " + shape_str(im.shape()));
    const Tensor small = im.shape()[0] == kInput ? im : downsample_box(im, im.shape()[0] / kInput);
    rows.insert(rows.end(), small.data().begin(), small.data().end());
  }
  return Tensor({static_cast<std::int64_t>(images.size()), kInput * kInput * 3}, std::move(rows));
}

Tensor ToyFeatureNet::features(const std::vector<Tensor>& images) const { return fc2(gelu(fc1(batch(images)))); }

Tensor ToyFeatureNet::logits(const std::vector<Tensor>& images) const { return head(gelu(features(images))); }

Tensor ToyFeatureNet::probabilities(const std::vector<Tensor>& images) const { return softmax(logits(images)); }

double ToyFeatureNet::train(ParamStore& store, const std::vector<Tensor>& images,
                            const std::vector<std::int64_t>& labels, std::int64_t steps, double learning_rate) {
  AdamConfig ac;
  ac.learning_rate = learning_rate;
  ac.warmup_steps = 1;
  Adam adam(ac);
  // Only this network's parameters are updated.
  ParamStore view;
  for (const auto& [name, t] : store.with_prefix(path_ + ".")) view.add(name, t);
  const Tensor x = batch(images);
  double last = 0.0;
  for (std::int64_t s = 0; s < steps; ++s) {
    view.zero_grad();
    Tensor loss = cross_entropy(head(gelu(fc2(gelu(fc1(x))))), labels);
    last = loss.item();
    loss.backward();
    adam.step(view);
  }
  return last;
}

double ToyFeatureNet::accuracy(const std::vector<Tensor>& images, const std::vector<std::int64_t>& labels) const {
  const Tensor l = logits(images);
  std::int64_t hit = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < kClasses; ++c)
      if (l.at(static_cast<std::int64_t>(r) * kClasses + c) > l.at(static_cast<std::int64_t>(r) * kClasses + best)) best = c;
    hit += best == labels[r] ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace scenediff
