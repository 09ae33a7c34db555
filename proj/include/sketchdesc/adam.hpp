#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/tensor.hpp"

namespace sketchdesc {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    require(learning_rate > 0.0, "learning rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    require(epsilon > 0.0, "Adam epsilon must be positive");
  }
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;

  AdamState() = default;
  explicit AdamState(const std::vector<Parameter<T>*>& params) {
    for (const auto* p : params) {
      m.emplace_back(p->value.shape);
      v.emplace_back(p->value.shape);
    }
  }
};

/// One bias-corrected Adam update of every parameter from its grad buffer.
/// A non-finite gradient anywhere leaves parameters and state untouched.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, const AdamConfig& cfg) {
  require(state.m.size() == params.size() && state.v.size() == params.size(), "Adam state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.m[i].shape == params[i]->value.shape && params[i]->grad.shape == params[i]->value.shape,
            "Adam moment shape mismatch for " + params[i]->name);
    for (T g : params[i]->grad.values)
      if (!std::isfinite(static_cast<double>(g))) throw runtime_failure("non-finite gradient in " + params[i]->name + ", step aborted");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i]->value.values;
    const auto& g = params[i]->grad.values;
    auto& m = state.m[i].values;
    auto& v = state.v[i].values;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - cfg.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + cfg.epsilon));
    }
  }
}

}  // namespace sketchdesc
