// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "scenediff/ops.hpp"
#include "scenediff/params.hpp"

namespace scenediff::nn {

// y = x W + b over the last axis. W is [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when built without bias
  std::int64_t in_features = 0;
  std::int64_t out_features = 0;

  Linear() = default;
  Linear(ParamStore& store, const std::string& path, std::int64_t in, std::int64_t out, Rng& rng,
         bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& path, std::int64_t dim, double eps = 1e-5);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
};

// Two linear layers with GELU between.
struct Mlp {
  Linear fc1;
  Linear fc2;

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& path, std::int64_t in, std::int64_t hidden, std::int64_t out,
      Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

// Overwrites a leaf's values in place (used by tests and identity inits).
void fill(Tensor& t, double value);
void set_identity(Linear& layer);

}  // namespace scenediff::nn
