// SPDX-License-Identifier: Apache-2.0
#include "scenediff/nn.hpp"

#include <algorithm>

#include "scenediff/errors.hpp"

namespace scenediff::nn {

Linear::Linear(ParamStore& store, const std::string& path, std::int64_t in, std::int64_t out, Rng& rng,
               bool with_bias)
    : in_features(in), out_features(out) {
  weight = store.add(path + ".weight", init::xavier_uniform(rng, in, out));
  if (with_bias) bias = store.add(path + ".bias", Tensor::zeros({out}));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_bcast(y, bias) : y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& path, std::int64_t dim, double eps_)
    : eps(eps_) {
  gain = store.add(path + ".gain", Tensor::full({dim}, 1.0));
  bias = store.add(path + ".bias", Tensor::zeros({dim}));
}

Mlp::Mlp(ParamStore& store, const std::string& path, std::int64_t in, std::int64_t hidden, std::int64_t out,
         Rng& rng)
    : fc1(store, path + ".fc1", in, hidden, rng), fc2(store, path + ".fc2", hidden, out, rng) {}

void fill(Tensor& t, double value) {
  auto d = t.mutable_data();
  std::fill(d.begin(), d.end(), value);
}

void set_identity(Linear& layer) {
  if (layer.in_features != layer.out_features) throw ShapeError("set_identity needs a square layer");
  fill(layer.weight, 0.0);
  auto w = layer.weight.mutable_data();
  for (std::int64_t i = 0; i < layer.in_features; ++i)
    w[static_cast<std::size_t>(i * layer.out_features + i)] = 1.0;
  if (layer.bias.defined()) fill(layer.bias, 0.0);
}

}  // namespace scenediff::nn
