// SPDX-License-Identifier: Apache-2.0
#include "scenediff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "scenediff/errors.hpp"

namespace scenediff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw ConfigError("noise schedule needs at least one step");
  alpha_bars_.assign(betas_.size() + 1, 1.0);
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) throw ConfigError("noise schedule betas must lie in (0, 1)");
    alpha_bars_[i + 1] = alpha_bars_[i] * (1.0 - betas_[i]);
  }
}

NoiseSchedule NoiseSchedule::linear(std::int64_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("noise schedule needs at least one step");
  std::vector<double> b(static_cast<std::size_t>(steps));
  for (std::int64_t i = 0; i < steps; ++i)
    b[static_cast<std::size_t>(i)] =
        steps == 1 ? beta_start
                   : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(steps - 1);
  return NoiseSchedule(std::move(b));
}

NoiseSchedule NoiseSchedule::scaled_linear(std::int64_t steps) {
  const double k = 1000.0 / static_cast<double>(steps);
  return linear(steps, 1e-4 * k, std::min(0.02 * k, 0.999));
}

double NoiseSchedule::beta(std::int64_t t) const {
  if (t < 1 || t > steps()) throw ShapeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(std::int64_t t) const {
  if (t < 0 || t > steps()) throw ShapeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  return alpha_bars_[static_cast<std::size_t>(t)];
}

Tensor forward_noise(const Tensor& x0, std::int64_t t, const Tensor& eps, const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bar(t);
  if (t == 0) return x0;
  if (eps.shape() != x0.shape()) throw ShapeError("forward_noise: eps shape differs from x0");
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

SamplingPlan make_sampling_plan(const NoiseSchedule& schedule, std::int64_t sample_steps) {
  const auto T = schedule.steps();
  if (sample_steps < 1 || sample_steps > T)
    throw ConfigError("sample steps must lie in [1, " + std::to_string(T) + "]");
  SamplingPlan plan;
  plan.alpha_bars.push_back(1.0);
  for (std::int64_t i = 1; i <= sample_steps; ++i) {
    // evenly spaced, rounded, ending at T
    const auto t = static_cast<std::int64_t>(std::llround(static_cast<double>(i * T) / static_cast<double>(sample_steps)));
    plan.timesteps.push_back(t);
    plan.alpha_bars.push_back(schedule.alpha_bar(t));
  }
  return plan;
}

Tensor standard_normal(Rng& rng, const Shape& shape) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor(shape, std::move(v));
}

Tensor ddpm_step(const SamplingPlan& plan, std::int64_t i, const Tensor& z, const Tensor& prediction,
                 PredictionTarget target, Rng& rng) {
  if (i < 1 || i > plan.steps()) throw ShapeError("sampling step index out of range");
  if (prediction.shape() != z.shape()) throw ShapeError("ddpm_step: prediction shape differs from z");
  const double ab = plan.alpha_bars[static_cast<std::size_t>(i)];
  const double ab_prev = plan.alpha_bars[static_cast<std::size_t>(i - 1)];
  const double beta = 1.0 - ab / ab_prev;
  const double alpha = 1.0 - beta;

  const auto zd = z.data(), pd = prediction.data();
  std::vector<double> out(zd.size());
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ct = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
  const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
  for (std::size_t k = 0; k < zd.size(); ++k) {
    double x0 = target == PredictionTarget::kEpsilon ? (zd[k] - std::sqrt(1.0 - ab) * pd[k]) / std::sqrt(ab) : pd[k];
    x0 = std::clamp(x0, -1.0, 1.0);
    out[k] = c0 * x0 + ct * zd[k];
  }
  if (i > 1)
    for (auto& v : out) v += sigma * rng.normal();
  return Tensor(z.shape(), std::move(out));
}

Tensor sample_loop(const Denoiser& denoiser, const Shape& shape, const SamplingPlan& plan, PredictionTarget target,
                   Rng& rng) {
  Tensor z = standard_normal(rng, shape);
  for (std::int64_t i = plan.steps(); i >= 1; --i) {
    const Tensor pred = denoiser(z, plan.timesteps[static_cast<std::size_t>(i - 1)]).detach();
    z = ddpm_step(plan, i, z, pred, target, rng);
  }
  return z;
}

namespace {

IndexPtr upsample_index(std::int64_t res, std::int64_t f, std::int64_t c) {
  thread_local std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, IndexPtr> cache;
  const auto key = std::make_tuple(res, f, c);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const std::int64_t big = res * f;
  auto idx = std::make_shared<Index>(static_cast<std::size_t>(big * big * c));
  std::size_t o = 0;
  for (std::int64_t r = 0; r < big; ++r)
    for (std::int64_t q = 0; q < big; ++q)
      for (std::int64_t ch = 0; ch < c; ++ch) (*idx)[o++] = ((r / f) * res + q / f) * c + ch;
  cache.emplace(key, idx);
  return idx;
}

}  // namespace

Tensor upsample_nearest(const Tensor& image, std::int64_t factor) {
  if (image.ndim() != 3 || image.shape()[0] != image.shape()[1]) throw ShapeError("upsample expects a square image");
  if (factor == 1) return image;
  const auto res = image.shape()[0], c = image.shape()[2];
  return gather(image, upsample_index(res, factor, c), {res * factor, res * factor, c});
}

Tensor downsample_box(const Tensor& image, std::int64_t factor) {
  if (image.ndim() != 3 || image.shape()[0] % factor || image.shape()[1] % factor)
    throw ShapeError("downsample_box: extents not divisible by factor");
  const auto h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  const auto oh = h / factor, ow = w / factor;
  const auto d = image.data();
  std::vector<double> out(static_cast<std::size_t>(oh * ow * c), 0.0);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::int64_t i = 0; i < oh; ++i)
    for (std::int64_t j = 0; j < ow; ++j)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::int64_t a = 0; a < factor; ++a)
          for (std::int64_t b = 0; b < factor; ++b) s += d[static_cast<std::size_t>(((i * factor + a) * w + j * factor + b) * c + ch)];
        out[static_cast<std::size_t>((i * ow + j) * c + ch)] = s * inv;
      }
  return Tensor({oh, ow, c}, std::move(out));
}

const char* role_name(StageRole role) {
  switch (role) {
    case StageRole::kBase: return "base";
    case StageRole::kSr1: return "sr1";
    case StageRole::kSr2: return "sr2";
  }
  return "?";
}

DiffusionStage::DiffusionStage(ParamStore& store, const std::string& path, StageRole role, const UNetConfig& unet,
                               const NoiseSchedule& schedule, std::int64_t low_resolution, Rng& rng)
    : role_(role), schedule_(schedule), low_resolution_(low_resolution) {
  UNetConfig cfg = unet;
  cfg.timesteps = schedule.steps();
  if (role == StageRole::kBase) {
    low_resolution_ = 0;
  } else {
    if (low_resolution <= 0 || cfg.resolution % low_resolution != 0)
      throw ConfigError(std::string(role_name(role)) + ": resolution must be a multiple of the previous stage's");
    if (cfg.in_channels != 2 * cfg.out_channels)
      throw ConfigError(std::string(role_name(role)) + ": super-resolution stages take 2x image channels");
  }
  unet_ = UNet(store, path, cfg, rng);
}

Tensor DiffusionStage::predict(const Tensor& z_t, std::int64_t t, const ConditionalEmbeddings& cond,
                               const Tensor& low) const {
  if (role_ == StageRole::kBase) return unet_.forward(z_t, t, cond);
  if (!low.defined() || low.ndim() != 3 || low.shape()[0] != low_resolution_)
    throw ShapeError(std::string(role_name(role_)) + " stage needs a " + std::to_string(low_resolution_) +
                     "px conditioning image");
  return unet_.forward(concat_last({z_t, upsample_nearest(low, resolution() / low_resolution_)}), t, cond);
}

Tensor DiffusionStage::sample(const ConditionalEmbeddings& cond, const Tensor& low, const SamplingPlan& plan,
                              Rng& rng) const {
  const auto& c = unet_.config();
  auto denoiser = [&](const Tensor& z, std::int64_t t) { return predict(z, t, cond, low); };
  return sample_loop(denoiser, {c.resolution, c.resolution, c.out_channels}, plan, c.target, rng);
}

Tensor denoising_loss(const DiffusionStage& stage, const Tensor& x0, const Tensor& low,
                      const ConditionalEmbeddings& cond, std::int64_t t, const Tensor& eps) {
  const Tensor z_t = forward_noise(x0, t, eps, stage.schedule());
  const Tensor pred = stage.predict(z_t, t, cond, low);
  return mse(pred, stage.unet().config().target == PredictionTarget::kEpsilon ? eps : x0);
}

Tensor training_loss(const DiffusionStage& stage, const Tensor& x0, const Tensor& low,
                     const ConditionalEmbeddings& cond, Rng& rng) {
  const std::int64_t t = rng.uniform_int(1, stage.schedule().steps());
  const Tensor eps = standard_normal(rng, x0.shape());
  return denoising_loss(stage, x0, low, cond, t, eps);
}

std::vector<Tensor> cascade_sample(const std::vector<const DiffusionStage*>& stages, const ConditionalEmbeddings& cond,
                                   const SamplingPlan& plan, Rng& rng) {
  std::vector<Tensor> images;
  Tensor low;
  for (const auto* stage : stages) {
    const Tensor raw = stage->sample(cond, low, plan, rng);
    std::vector<double> v(raw.data().begin(), raw.data().end());
    for (auto& x : v) x = std::clamp(x, -1.0, 1.0);
    low = Tensor(raw.shape(), std::move(v));
    images.push_back(low);
  }
  return images;
}

}  // namespace scenediff
