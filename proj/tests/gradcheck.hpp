// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

// Central finite-difference oracle for the autodiff engine. Independent of
// backward(): it only re-evaluates the forward function.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace dyad::testing {

using ad::Tensor;

inline Tensor random_tensor(ad::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<float> v(ad::numel(shape));
  for (float& x : v) x = static_cast<float>(rng.normal() * scale);
  return Tensor::from(std::move(shape), std::move(v), true);
}

struct GradCheckResult {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
};

// `f` maps the inputs to any tensor; it is reduced to a scalar through a
// fixed random projection so every output coordinate contributes.
inline GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> inputs, Rng& rng, double h = 1e-3) {
  const Tensor probe = f(inputs);
  std::vector<float> weights(probe.size());
  for (float& w : weights) w = static_cast<float>(rng.uniform(-1.0, 1.0));
  const Tensor w = Tensor::from(probe.shape(), weights);
  auto loss_of = [&](const std::vector<Tensor>& in) { return ad::sum(ad::mul(f(in), w)); };

  for (Tensor& t : inputs) t.zero_grad();
  ad::backward(loss_of(inputs));

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<float> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float saved = t.data()[i];
      double fp, fm;
      {
        ad::NoGradGuard guard;
        t.data()[i] = static_cast<float>(saved + h);
        fp = loss_of(inputs).item();
        t.data()[i] = static_cast<float>(saved - h);
        fm = loss_of(inputs).item();
      }
      t.data()[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return {std::sqrt(diff2) / denom, std::sqrt(a2)};
}

}  // namespace dyad::testing
