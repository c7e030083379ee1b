#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf {

inline constexpr double kDefaultFdStep = 1e-5;

/// Compares reverse-mode gradients of a scalar function of `params` against
/// central differences. Returns max over all coordinates of
/// |analytic - numeric| / max(1, |analytic|).
inline double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                      double h = kDefaultFdStep) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const Tensor loss = f();
  if (loss.size() != 1) fail(ErrorKind::contract, "finite_difference_check: function must return a scalar");
  backward(loss);

  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad();
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = f().item();
      data[i] = saved - h;
      const double down = f().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
  }
  return worst;
}

/// Single-input form: f maps x to a scalar tensor.
inline double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                      double h = kDefaultFdStep) {
  Tensor input = x.clone(true);
  return finite_difference_check([&] { return f(input); }, {input}, h);
}

}  // namespace tsf
