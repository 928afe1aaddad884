// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "expertfind/errors.h"

namespace expertfind {
namespace {

void observe(GradCheckResult& result, const GradCheckOptions& options, const std::string& name,
             std::size_t index, double analytic, double numeric) {
  const double err = relative_error(analytic, numeric, options.floor);
  ++result.checked;
  if (result.checked == 1 || err > result.max_rel_error) {
    result.max_rel_error = err;
    result.worst_param = name;
    result.worst_index = index;
    result.worst_analytic = analytic;
    result.worst_numeric = numeric;
  }
}

double scalar_value(const Tensor<double>& y) {
  if (y.numel() != 1) {
    throw DimensionError("grad_check: function must be scalar-valued, got " +
                         shape_to_string(y.shape()));
  }
  return y.item();
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                           const Tensor<double>& x, const GradCheckOptions& options) {
  std::vector<double> base(x.values().begin(), x.values().end());
  std::vector<double> analytic;
  {
    Tape<double> tape;
    Tensor<double> leaf = tape.leaf(x.shape(), base);
    Tensor<double> y = f(leaf);
    scalar_value(y);
    if (!y.requires_grad()) {
      analytic.assign(base.size(), 0.0);
    } else {
      tape.backward(y);
      analytic.assign(leaf.grad().begin(), leaf.grad().end());
    }
  }
  if (options.corrupt_gradient && !analytic.empty()) analytic[0] = analytic[0] * 1.5 + 0.1;

  GradCheckResult result;
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + options.step;
    const double up = scalar_value(f(Tensor<double>::constant(x.shape(), probe)));
    probe[i] = base[i] - options.step;
    const double down = scalar_value(f(Tensor<double>::constant(x.shape(), probe)));
    probe[i] = base[i];
    observe(result, options, "x", i, analytic[i], (up - down) / (2.0 * options.step));
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

GradCheckResult grad_check_params(
    const std::function<Tensor<double>(ParamBinding<double>&)>& loss,
    const ParamStore<double>& params, const GradCheckOptions& options) {
  Gradients<double> analytic(params);
  {
    Tape<double> tape;
    ParamBinding<double> binding(params, &tape);
    Tensor<double> y = loss(binding);
    scalar_value(y);
    if (y.requires_grad()) {
      tape.backward(y);
      binding.accumulate_into(analytic);
    }
  }
  if (options.corrupt_gradient) {
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      if (!analytic[i].empty()) {
        analytic[i][0] = analytic[i][0] * 1.5 + 0.1;
        break;
      }
    }
  }

  GradCheckResult result;
  ParamStore<double> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = probe.entry(p).values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      ParamBinding<double> up_binding(probe, nullptr);
      const double up = scalar_value(loss(up_binding));
      values[i] = saved - options.step;
      ParamBinding<double> down_binding(probe, nullptr);
      const double down = scalar_value(loss(down_binding));
      values[i] = saved;
      observe(result, options, params.entry(p).name, i, analytic[p][i],
              (up - down) / (2.0 * options.step));
    }
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

}  // namespace expertfind
