// SPDX-License-Identifier: Apache-2.0
#include "scenediff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scenediff/rng.hpp"

namespace scenediff {

GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           const std::vector<std::pair<std::string, Tensor>>& tensors,
                           const GradCheckOptions& options) {
  std::vector<Tensor> leaves;
  for (const auto& [name, t] : tensors) {
    leaves.push_back(t);
    leaves.back().zero_grad();
  }
  loss().backward();

  Rng rng(options.seed);
  GradCheckReport report;
  for (std::size_t ti = 0; ti < leaves.size(); ++ti) {
    Tensor& t = leaves[ti];
    const auto n = t.numel();
    std::vector<std::int64_t> probe(static_cast<std::size_t>(n));
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_entries > 0 && n > options.max_entries) {
      for (std::int64_t i = 0; i < options.max_entries; ++i)
        std::swap(probe[static_cast<std::size_t>(i)], probe[static_cast<std::size_t>(rng.uniform_int(i, n - 1))]);
      probe.resize(static_cast<std::size_t>(options.max_entries));
    }
    const auto analytic = t.grad();
    double diff2 = 0.0, a2 = 0.0, d2 = 0.0;
    for (auto idx : probe) {
      auto w = t.mutable_data();
      const double orig = w[static_cast<std::size_t>(idx)];
      w[static_cast<std::size_t>(idx)] = orig + options.step;
      const double up = loss().item();
      w[static_cast<std::size_t>(idx)] = orig - options.step;
      const double down = loss().item();
      w[static_cast<std::size_t>(idx)] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.empty() ? 0.0 : analytic[static_cast<std::size_t>(idx)];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      d2 += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / (std::sqrt(a2) + std::sqrt(d2) + options.eps);
    report.per_tensor.emplace_back(tensors[ti].first, rel);
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = tensors[ti].first;
    }
  }
  return report;
}

}  // namespace scenediff
