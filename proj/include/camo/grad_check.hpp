#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "camo/tensor.hpp"

namespace camo {

// Central finite-difference verification of reverse-mode gradients.
// fn must map one tensor to a scalar tensor and rebuild its graph on every
// call. Returns the max relative error over all input elements; elements
// where both the analytic and numeric gradient are below skip_tol are
// ignored (their relative error is meaningless).
template <typename Fn>
double grad_check(Fn fn, const Tensor<double>& input, double eps = 1e-5,
                  double skip_tol = 1e-8) {
  if (!(eps > 0.0)) throw ParamError("grad_check: eps must be > 0");

  Tensor<double> x(input.shape(), input.values(), /*requires_grad=*/true);
  Tensor<double> loss = fn(x);
  if (loss.size() != 1) throw UsageError("grad_check: fn must be scalar-valued");
  loss.backward();
  const std::vector<double> analytic = x.grad();

  std::vector<double> base = input.values();
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double saved = base[i];
    base[i] = saved + eps;
    const double up = fn(Tensor<double>(input.shape(), base)).item();
    base[i] = saved - eps;
    const double down = fn(Tensor<double>(input.shape(), base)).item();
    base[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    if (std::abs(a) < skip_tol && std::abs(numeric) < skip_tol) continue;
    const double rel =
        std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace camo
