#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mmsr/tensor.hpp"

namespace mmsr {

struct AdamConfig {
  Real beta1 = 0.9;
  Real beta2 = 0.99;
  Real eps = 1e-8;
};

/// First/second moment estimates for one parameter list, indexed like it.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  bool initialized_for(const std::vector<Parameter*>& params) const {
    if (m.size() != params.size() || v.size() != params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (m[i].shape() != params[i]->value.shape()) return false;
    return true;
  }
};

/// One bias-corrected Adam update. Moments are zero-initialized on first use.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& state, Real lr, const AdamConfig& cfg = {}) {
  if (!(cfg.eps > 0)) throw std::invalid_argument("adam_step: eps must be positive");
  if (!state.initialized_for(params)) {
    if (state.step != 0 || !state.m.empty()) throw std::invalid_argument("adam_step: optimizer state does not match parameters");
    state.m.clear();
    state.v.clear();
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  ++state.step;
  const Real t = static_cast<Real>(state.step);
  const Real bc1 = 1 - std::pow(cfg.beta1, t);
  const Real bc2 = 1 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.values();
    const auto& g = params[k]->grad.values();
    auto& m = state.m[k].values();
    auto& v = state.v[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace mmsr
