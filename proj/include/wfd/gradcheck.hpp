#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "wfd/tensor.hpp"

namespace wfd {

// Central finite-difference gradient checker. `eval` recomputes the scalar
// objective from current state; `coords` are pointers to the checked values
// with `analytic` their claimed gradients. Returns the maximum relative
// error  |fd - analytic| / max(1, |fd|, |analytic|).
//
// A relu kink falling inside the +/- eps window produces a one-off large
// error that disappears at a smaller step, while a wrong analytic gradient
// does not; suspicious coordinates are therefore re-checked at eps/64 and
// the smaller error kept.
inline double grad_check(const std::function<double()>& eval,
                         const std::vector<double*>& coords,
                         const std::vector<double>& analytic,
                         double eps = 1e-6) {
  auto fd_error = [&](double* coord, double claimed, double step) {
    double& v = *coord;
    const double saved = v;
    v = saved + step;
    const double up = eval();
    v = saved - step;
    const double down = eval();
    v = saved;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(fd), std::abs(claimed)});
    return std::abs(fd - claimed) / denom;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double err = fd_error(coords[i], analytic[i], eps);
    if (err > 1e-6) err = std::min(err, fd_error(coords[i], analytic[i], eps / 64.0));
    worst = std::max(worst, err);
  }
  return worst;
}

// Convenience overload checking every element of a tensor's gradient.
inline double grad_check(const std::function<double()>& eval, Tensor& value,
                         const Tensor& grad, double eps = 1e-6) {
  std::vector<double*> coords;
  std::vector<double> analytic;
  coords.reserve(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    coords.push_back(&value.data[i]);
    analytic.push_back(grad.data[i]);
  }
  return grad_check(eval, coords, analytic, eps);
}

}  // namespace wfd
