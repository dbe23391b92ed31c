// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/optim.hpp"

#include <algorithm>
#include <cmath>

#include "dyad/errors.hpp"

namespace dyad {

void adam_step(ParameterStore& store, AdamState& state, double lr) {
  for (const auto& [name, t] : store) {
    if (t.requires_grad() && !t.has_grad()) {
      throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : store) {
    if (!t.requires_grad()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0f);
    if (v.size() != t.size()) v.assign(t.size(), 0.0f);
    auto values = t.data();
    auto grads = t.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = static_cast<float>(state.beta1 * m[i] + (1.0 - state.beta1) * g);
      v[i] = static_cast<float>(state.beta2 * v[i] + (1.0 - state.beta2) * g * g);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] = static_cast<float>(values[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

double noam_lr(std::uint64_t step, double base_lr, std::uint64_t warmup, std::uint64_t model_dim) {
  if (step == 0) throw ContractError("noam_lr: step must be >= 1");
  if (warmup == 0 || model_dim == 0) throw ContractError("noam_lr: warmup and model_dim must be >= 1");
  const double s = static_cast<double>(step);
  const double wu = static_cast<double>(warmup);
  return base_lr / std::sqrt(static_cast<double>(model_dim)) * std::min(1.0 / std::sqrt(s), s * std::pow(wu, -1.5));
}

}  // namespace dyad
