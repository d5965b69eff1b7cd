// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "scenediff/params.hpp"

namespace scenediff {

struct AdamConfig {
  double learning_rate = 1e-4;
  std::int64_t warmup_steps = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with a linear warmup to a constant rate.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Rate applied on optimizer step `step` (1-based): lr * min(1, step / warmup).
  double learning_rate(std::int64_t step) const;

  // One update of every trainable parameter in `store`, using its current
  // gradient (missing gradient = zero).
  void step(ParamStore& store);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

  // Moments are exported as "adam.m/<path>" and "adam.v/<path>".
  void export_state(std::map<std::string, Tensor>& out) const;
  void import_state(const std::map<std::string, Tensor>& in, std::int64_t steps_taken);

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace scenediff
