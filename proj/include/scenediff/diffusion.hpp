// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scenediff/unet.hpp"

namespace scenediff {

// beta_t for t = 1..T; alpha_bar_0 = 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> betas);
  static NoiseSchedule linear(std::int64_t steps, double beta_start, double beta_end);
  // The 1000-step linear schedule (1e-4 .. 0.02) rescaled to `steps`, so
  // alpha_bar_T stays near zero for short chains.
  static NoiseSchedule scaled_linear(std::int64_t steps);

  std::int64_t steps() const { return static_cast<std::int64_t>(betas_.size()); }
  double beta(std::int64_t t) const;
  double alpha(std::int64_t t) const { return 1.0 - beta(t); }
  double alpha_bar(std::int64_t t) const;  // t in [0, T]

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // [0] = 1
};

// z_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps; t = 0 returns x0.
Tensor forward_noise(const Tensor& x0, std::int64_t t, const Tensor& eps, const NoiseSchedule& schedule);

// Timesteps visited by a strided sampler, ascending: t_1 < ... < t_S = T.
// The reverse chain runs on the respaced betas 1 - alpha_bar(t_i) / alpha_bar(t_{i-1}).
struct SamplingPlan {
  std::vector<std::int64_t> timesteps;  // [S]
  std::vector<double> alpha_bars;       // [S + 1], alpha_bars[0] = 1

  std::int64_t steps() const { return static_cast<std::int64_t>(timesteps.size()); }
};
SamplingPlan make_sampling_plan(const NoiseSchedule& schedule, std::int64_t sample_steps);

Tensor standard_normal(Rng& rng, const Shape& shape);

// One ancestral step from plan index i (1-based, timestep plan.timesteps[i-1])
// to i - 1. `prediction` is the network output in the given target mode; the
// implied x0 is clipped to [-1, 1]. Variance is the posterior beta-tilde, so
// the i = 1 step adds no noise (and draws none).
Tensor ddpm_step(const SamplingPlan& plan, std::int64_t i, const Tensor& z, const Tensor& prediction,
                 PredictionTarget target, Rng& rng);

using Denoiser = std::function<Tensor(const Tensor& z_t, std::int64_t t)>;
// Starts from N(0, I) and runs every step of the plan.
Tensor sample_loop(const Denoiser& denoiser, const Shape& shape, const SamplingPlan& plan, PredictionTarget target,
                   Rng& rng);

// [R, R, c] -> [f R, f R, c]
Tensor upsample_nearest(const Tensor& image, std::int64_t factor);
// [R, R, c] -> [R / f, R / f, c] by f x f box averaging.
Tensor downsample_box(const Tensor& image, std::int64_t factor);

enum class StageRole { kBase, kSr1, kSr2 };
const char* role_name(StageRole role);

// One level of the cascade. Super-resolution stages take the previous
// image, nearest-upsampled and channel-concatenated with z_t.
class DiffusionStage {
 public:
  DiffusionStage(ParamStore& store, const std::string& path, StageRole role, const UNetConfig& unet,
                 const NoiseSchedule& schedule, std::int64_t low_resolution, Rng& rng);

  // low: previous-stage image at low_resolution (ignored by the base stage).
  Tensor predict(const Tensor& z_t, std::int64_t t, const ConditionalEmbeddings& cond, const Tensor& low) const;
  Tensor sample(const ConditionalEmbeddings& cond, const Tensor& low, const SamplingPlan& plan, Rng& rng) const;

  StageRole role() const { return role_; }
  std::int64_t resolution() const { return unet_.config().resolution; }
  std::int64_t low_resolution() const { return low_resolution_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const UNet& unet() const { return unet_; }

 private:
  StageRole role_;
  UNet unet_;
  NoiseSchedule schedule_;
  std::int64_t low_resolution_;
};

// Draws t ~ U{1..T} and eps ~ N(0, I), and returns the pixel MSE between the
// network output and its target (eps, or x0 in x0 mode).
Tensor training_loss(const DiffusionStage& stage, const Tensor& x0, const Tensor& low,
                     const ConditionalEmbeddings& cond, Rng& rng);
// Same with t and eps given.
Tensor denoising_loss(const DiffusionStage& stage, const Tensor& x0, const Tensor& low,
                      const ConditionalEmbeddings& cond, std::int64_t t, const Tensor& eps);

// Samples every stage in order; each output is clamped to [-1, 1] and feeds
// the next stage.
std::vector<Tensor> cascade_sample(const std::vector<const DiffusionStage*>& stages, const ConditionalEmbeddings& cond,
                                   const SamplingPlan& plan, Rng& rng);

}  // namespace scenediff
