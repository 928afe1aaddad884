// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "expertfind/params.h"
#include "expertfind/tensor.h"

namespace expertfind {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so that gradients that are zero
  // up to rounding are judged on absolute error instead.
  double floor = 1e-4;
  // Negative-control hook: perturbs one analytic gradient entry.
  bool corrupt_gradient = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

// Compares the reverse-mode gradient of a scalar-valued f at x against
// central differences (f(x+h) - f(x-h)) / 2h, elementwise. f must build its
// result from its argument with the ops in ops.h. Throws DimensionError if f
// is not scalar-valued.
GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& x, const GradCheckOptions& options = {});

// Same check over every element of every parameter of a loss built from a
// ParamBinding. The loss must be deterministic (no dropout).
GradCheckResult grad_check_params(
    const std::function<Tensor<double>(ParamBinding<double>&)>& loss,
    const ParamStore<double>& params, const GradCheckOptions& options = {});

}  // namespace expertfind
