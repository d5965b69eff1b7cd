// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scenediff/tensor.hpp"

namespace scenediff {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries probed per tensor (sampled without replacement); 0 = all.
  std::int64_t max_entries = 0;
  std::uint64_t seed = 0;
  double eps = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::vector<std::pair<std::string, double>> per_tensor;
};

// Compares backward() against central differences. For each named tensor the
// error is ||analytic - numeric|| / (||analytic|| + ||numeric|| + eps) over the
// probed entries (Euclidean norms); the report's max is over tensors.
// `loss` must rebuild the graph from the current leaf values on every call.
GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           const std::vector<std::pair<std::string, Tensor>>& tensors,
                           const GradCheckOptions& options = {});

}  // namespace scenediff
