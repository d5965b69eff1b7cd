// SPDX-License-Identifier: Apache-2.0
#include "scenediff/params.hpp"

#include <algorithm>
#include <cmath>

#include "scenediff/errors.hpp"

namespace scenediff {

Tensor ParamStore::add(const std::string& path, Tensor value) {
  if (params_.count(path)) throw Error("duplicate parameter path " + path);
  value.set_requires_grad(true);
  params_.emplace(path, value);
  return value;
}

Tensor ParamStore::get(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw Error("unknown parameter path " + path);
  return it->second;
}

std::vector<std::pair<std::string, Tensor>> ParamStore::trainable() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [k, v] : params_)
    if (v.requires_grad()) out.emplace_back(k, v);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ParamStore::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [k, v] : params_)
    if (k.rfind(prefix, 0) == 0) out.emplace_back(k, v);
  return out;
}

void ParamStore::set_trainable(const std::string& prefix, bool flag) {
  for (auto& [k, v] : params_)
    if (k.rfind(prefix, 0) == 0) v.set_requires_grad(flag);
}

std::int64_t ParamStore::numel(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& [k, v] : params_)
    if (k.rfind(prefix, 0) == 0) n += v.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [k, v] : params_) v.zero_grad();
}

void ParamStore::load(const std::map<std::string, Tensor>& values) {
  for (auto& [k, v] : params_) {
    auto it = values.find(k);
    if (it == values.end()) throw CheckpointError("checkpoint is missing parameter " + k);
    if (it->second.shape() != v.shape())
      throw CheckpointError("shape mismatch for " + k + ": " + shape_str(it->second.shape()) + " vs " +
                            shape_str(v.shape()));
    auto dst = v.mutable_data();
    std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
  }
}

void ParamStore::clamp_min(const std::string& suffix, double floor) {
  for (auto& [k, v] : params_) {
    if (k.size() < suffix.size() || k.compare(k.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    for (auto& x : v.mutable_data()) x = std::max(x, floor);
  }
}

namespace init {

Tensor xavier_uniform(Rng& rng, std::int64_t fan_in, std::int64_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(static_cast<std::size_t>(fan_in * fan_out));
  for (auto& x : w) x = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor({fan_in, fan_out}, std::move(w));
}

Tensor normal(Rng& rng, const Shape& shape, double stddev) {
  std::vector<double> w(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : w) x = rng.normal() * stddev;
  return Tensor(shape, std::move(w));
}

}  // namespace init
}  // namespace scenediff
