// SPDX-License-Identifier: Apache-2.0
#include "scenediff/optim.hpp"

#include <algorithm>
#include <cmath>

namespace scenediff {

double Adam::learning_rate(std::int64_t step) const {
  if (config_.warmup_steps <= 0) return config_.learning_rate;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(config_.warmup_steps));
  return config_.learning_rate * frac;
}

void Adam::step(ParamStore& store) {
  ++t_;
  const double lr = learning_rate(t_);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [path, p] : store.trainable()) {
    auto& m = m_[path];
    auto& v = v_[path];
    const auto n = static_cast<std::size_t>(p.numel());
    if (m.empty()) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    auto w = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::export_state(std::map<std::string, Tensor>& out) const {
  for (const auto& [path, m] : m_) {
    const auto n = static_cast<std::int64_t>(m.size());
    out.insert_or_assign("adam.m/" + path, Tensor({n}, m));
    out.insert_or_assign("adam.v/" + path, Tensor({n}, v_.at(path)));
  }
}

void Adam::import_state(const std::map<std::string, Tensor>& in, std::int64_t steps_taken) {
  m_.clear();
  v_.clear();
  for (const auto& [key, t] : in) {
    if (key.rfind("adam.m/", 0) == 0)
      m_[key.substr(7)].assign(t.data().begin(), t.data().end());
    else if (key.rfind("adam.v/", 0) == 0)
      v_[key.substr(7)].assign(t.data().begin(), t.data().end());
  }
  t_ = steps_taken;
}

}  // namespace scenediff
