#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "seqmatch/autodiff.hpp"

namespace seqmatch {

struct AdamaxConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First moment and exponentially weighted infinity norm per parameter.
struct AdamaxState {
  std::map<std::string, Tensor> moment;
  std::map<std::string, Tensor> inf_norm;
  std::uint64_t step = 0;
};

// One Adamax update of every parameter that has a gradient entry:
//   m <- b1 m + (1 - b1) g
//   u <- max(b2 u, |g|)
//   p <- p - lr / (1 - b1^t) * m / (u + eps)
// Parameters without a gradient entry are left alone. A non-finite gradient
// aborts the step before anything is modified.
template <typename Params>
void adamax_step(Params& params, const GradientMap& grads, AdamaxState& state, const AdamaxConfig& cfg) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter '" + name + "'");
    Tensor::require_same_shape(it->second, g, ("adamax_step: " + name).c_str());
    if (!g.all_finite()) throw TrainingError("non-finite gradient for parameter '" + name + "'");
  }
  ++state.step;
  const double correction = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double rate = cfg.learning_rate / correction;
  for (const auto& [name, g] : grads) {
    Tensor& p = params.find(name)->second;
    auto [mit, m_new] = state.moment.try_emplace(name, Tensor::zeros(p.shape()));
    auto [uit, u_new] = state.inf_norm.try_emplace(name, Tensor::zeros(p.shape()));
    Tensor& m = mit->second;
    Tensor& u = uit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      u[i] = std::max(cfg.beta2 * u[i], std::abs(g[i]));
      p[i] -= rate * m[i] / (u[i] + cfg.epsilon);
    }
  }
}

}  // namespace seqmatch
