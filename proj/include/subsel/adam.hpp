#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "subsel/tensor.hpp"

namespace subsel {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment estimates for one parameter group, keyed by parameter name.
struct AdamState {
  struct Moments {
    Tensor m;
    Tensor v;
  };
  std::unordered_map<std::string, Moments> moments;
  std::size_t step = 0;
};

inline void adam_step(std::span<Parameter* const> params, const Gradients& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Parameter* p : params) {
    const Tensor g = grads.get(*p);
    auto [it, inserted] = state.moments.try_emplace(
        p->name, AdamState::Moments{Tensor(p->value.rows(), p->value.cols()),
                                    Tensor(p->value.rows(), p->value.cols())});
    auto& mom = it->second;
    if (!mom.m.same_shape(p->value) || !g.same_shape(p->value)) {
      throw std::invalid_argument("adam_step: shape mismatch for " + p->name);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g[i];
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      p->value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace subsel
