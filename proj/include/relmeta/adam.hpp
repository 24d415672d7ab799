#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "relmeta/common.hpp"

namespace relmeta {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> m;  // first-moment running average
  std::vector<double> v;  // second-moment running average
  long step = 0;

  explicit AdamState(std::size_t n, AdamConfig cfg = {})
      : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

// One Adam update with bias correction. Rejects non-finite gradients before
// touching any state, so a failed step leaves params and moments intact.
inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grads) {
  require(params.size() == state.m.size(), "adam_step: param size mismatch");
  require(grads.size() == state.m.size(), "adam_step: grad size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw ModelDiverged("adam_step: non-finite gradient at index " + std::to_string(i));

  state.step += 1;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace relmeta
