// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fwg/ops.hpp"

namespace fwg {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t components_checked = 0;
};

// Compares reverse-mode gradients against central finite differences.
//
// f maps the checked tensor to a scalar loss and must be deterministic
// (dropout off, no fresh randomness per call). The analytic pass records f on
// a tape rooted at x; the numeric pass re-evaluates f with x perturbed in
// place, one component at a time.
//
// Tensors larger than max_components are checked on a seeded random subset;
// pass max_components <= 0 to check every component. Relative error per
// component: |analytic - numeric| / max(1, |analytic|, |numeric|).
template <typename F>
GradCheckResult grad_check(F&& f, Tensor<double>& x, double step = 1e-5,
                           int max_components = 0, uint64_t sample_seed = 7) {
  const bool had_rg = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape<double> tape;
    tape.watch(x);
    Tensor<double> loss = f(static_cast<const Tensor<double>&>(x));
    tape.backward(loss);
  }
  std::vector<double> analytic(static_cast<size_t>(x.size()), 0.0);
  if (x.has_grad()) analytic = x.grad_vec();
  x.detach();

  std::vector<int64_t> picks;
  const int64_t n = x.size();
  if (max_components > 0 && n > max_components) {
    Rng rng(sample_seed);
    picks.reserve(static_cast<size_t>(max_components));
    for (int i = 0; i < max_components; ++i) picks.push_back(rng.uniform_int(n));
    std::sort(picks.begin(), picks.end());
    picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  } else {
    picks.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) picks[static_cast<size_t>(i)] = i;
  }

  auto eval = [&]() -> double {
    Tensor<double> loss = f(static_cast<const Tensor<double>&>(x));
    check_shape(loss.size() == 1, "grad_check: f must return a scalar");
    return loss[0];
  };

  GradCheckResult res;
  res.components_checked = static_cast<int64_t>(picks.size());
  for (int64_t i : picks) {
    const double orig = x[i];
    x[i] = orig + step;
    const double lp = eval();
    x[i] = orig - step;
    const double lm = eval();
    x[i] = orig;
    const double numeric = (lp - lm) / (2.0 * step);
    const double a = analytic[static_cast<size_t>(i)];
    const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
    res.max_rel_err = std::max(res.max_rel_err, std::fabs(a - numeric) / denom);
  }
  x.set_requires_grad(had_rg);
  return res;
}

}  // namespace fwg
