// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "scenediff/rng.hpp"
#include "scenediff/tensor.hpp"

namespace scenediff {

// Named trainable leaves. Paths are dot-separated and stable; they are the
// keys used by checkpoints. Iteration order is lexicographic by path.
class ParamStore {
 public:
  Tensor add(const std::string& path, Tensor value);
  Tensor get(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) != 0; }

  const std::map<std::string, Tensor>& all() const { return params_; }
  // Parameters that currently require a gradient.
  std::vector<std::pair<std::string, Tensor>> trainable() const;
  std::vector<std::pair<std::string, Tensor>> with_prefix(const std::string& prefix) const;
  void set_trainable(const std::string& prefix, bool flag);

  std::int64_t numel(const std::string& prefix = "") const;
  void zero_grad();
  // Copies values into the existing leaves; paths and shapes must match.
  void load(const std::map<std::string, Tensor>& values);
  // Lower-bounds every parameter whose path ends with `suffix`.
  void clamp_min(const std::string& suffix, double floor);

 private:
  std::map<std::string, Tensor> params_;
};

namespace init {
Tensor xavier_uniform(Rng& rng, std::int64_t fan_in, std::int64_t fan_out);
Tensor normal(Rng& rng, const Shape& shape, double stddev);
}  // namespace init

}  // namespace scenediff
