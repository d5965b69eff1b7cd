// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "scenediff/nn.hpp"
#include "scenediff/scenegraph.hpp"

namespace scenediff {

struct GaussianStats {
  std::int64_t dim = 0;
  std::int64_t n = 0;
  std::vector<double> mu;     // [dim]
  std::vector<double> sigma;  // [dim * dim], row-major, unbiased
};

// features: [n, d] with n >= 2.
GaussianStats gaussian_stats(const Tensor& features);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), with
// symmetric eigendecompositions and negative eigenvalues clipped to zero.
double fid(const GaussianStats& a, const GaussianStats& b);

// exp(mean_x KL(p(y|x) || p(y))); probs: [n, classes], rows summing to 1.
double inception_score(const Tensor& probs);

// Stand-in feature extractor: a classifier over (first shape, first color,
// first relation or none) trained on the synthetic set. Images of any
// resolution are box-downsampled to 8x8 first.
class ToyFeatureNet {
 public:
  static constexpr std::int64_t kClasses = 45;
  static constexpr std::int64_t kInput = 8;

  ToyFeatureNet(ParamStore& store, const std::string& path, Rng& rng, std::int64_t d_feat = 16,
                std::int64_t hidden = 64);

  static std::int64_t label_of(const SceneGraph& graph);

  // images: each [R, R, 3] -> rows of [n, d_feat] / [n, classes].
  Tensor features(const std::vector<Tensor>& images) const;
  Tensor logits(const std::vector<Tensor>& images) const;
  Tensor probabilities(const std::vector<Tensor>& images) const;

  // Full-batch Adam on cross-entropy; returns the final training loss.
  double train(ParamStore& store, const std::vector<Tensor>& images, const std::vector<std::int64_t>& labels,
               std::int64_t steps, double learning_rate);
  double accuracy(const std::vector<Tensor>& images, const std::vector<std::int64_t>& labels) const;

  std::int64_t d_feat() const { return d_feat_; }

 private:
  Tensor batch(const std::vector<Tensor>& images) const;

  std::string path_;
  std::int64_t d_feat_;
  nn::Linear fc1, fc2, head;
};

}  // namespace scenediff
