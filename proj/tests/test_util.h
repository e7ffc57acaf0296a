#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core/tensor.h"

namespace tritex::testing {

// Central finite differences of a scalar function against the analytic
// gradient already stored in param.grad. Probes every coordinate.
inline double max_rel_grad_error(Tensor& param, const std::function<double()>& eval,
                                 double h = 1e-6, double floor = 1e-8) {
  double worst = 0.0;
  double* v = param.data();
  const double* g = param.grad();
  for (int64_t i = 0; i < param.numel(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double fp = eval();
    v[i] = keep - h;
    const double fm = eval();
    v[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), floor});
    const double rel = std::abs(fd - g[i]) / denom;
    if (std::abs(fd - g[i]) > floor && rel > worst) worst = rel;
  }
  return worst;
}

inline bool approx_eq(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

// Finite-difference probe of k seeded coordinates of one parameter tensor.
// The analytic gradient must already be in param.grad.
inline double sampled_rel_grad_error(Tensor& param, const std::function<double()>& eval,
                                     uint64_t seed, int k, double h = 1e-6,
                                     double floor = 1e-7) {
  Rng rng(seed);
  double worst = 0.0;
  double* v = param.data();
  const double* g = param.grad();
  for (int probe = 0; probe < k; ++probe) {
    const int64_t i = rng.uniform_int(param.numel());
    const double keep = v[i];
    v[i] = keep + h;
    const double fp = eval();
    v[i] = keep - h;
    const double fm = eval();
    v[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    if (std::abs(fd - g[i]) <= floor) continue;
    const double rel = std::abs(fd - g[i]) / std::max(std::abs(fd), std::abs(g[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace tritex::testing
