// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "expertfind/errors.h"
#include "expertfind/params.h"

namespace expertfind {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of a single buffer. `step` is 1-based.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t step, double lr, const AdamOptions& opt = {}) {
  if (param.size() != grad.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adam_update: parameter/gradient/state sizes differ");
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
    const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + opt.eps);
    param[i] = static_cast<T>(param[i] - update);
  }
}

template <typename T>
void adam_step(ParamStore<T>& params, const Gradients<T>& grads, AdamState<T>& state, double lr,
               const AdamOptions& opt = {}) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& e : params.entries()) {
      state.m.emplace_back(e.values.size(), T(0));
      state.v.emplace_back(e.values.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state size mismatch");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& values = params.entry(i).values;
    if (grads[i].size() != values.size()) {
      throw DimensionError("adam_step: gradient size mismatch for " + params.entry(i).name);
    }
    adam_update<T>(values, grads[i], state.m[i], state.v[i], state.step, lr, opt);
  }
}

}  // namespace expertfind
