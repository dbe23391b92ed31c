// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dyad/params.hpp"

namespace dyad {

struct AdamState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
};

// One bias-corrected Adam update over every trainable entry of `store`.
// Gradients are left in place; the caller resets them.
void adam_step(ParameterStore& store, AdamState& state, double lr);

// base_lr * model_dim^-0.5 * min(step^-0.5, step * warmup^-1.5)
double noam_lr(std::uint64_t step, double base_lr, std::uint64_t warmup, std::uint64_t model_dim);

}  // namespace dyad
