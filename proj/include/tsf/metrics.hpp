#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "tsf/error.hpp"

namespace tsf {

/// Sample Pearson correlation; undefined (error) when either input is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    fail(ErrorKind::dimension, "pearson: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  if (x.size() < 2) fail(ErrorKind::length, "pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // the mean of a constant can round off it, so test equality directly
  const auto constant = [](std::span<const double> v) { return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; }); };
  if (sxx == 0.0 || syy == 0.0 || constant(x) || constant(y)) fail(ErrorKind::validation, "pearson: correlation undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double rmse(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    fail(ErrorKind::dimension, "rmse: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  if (x.empty()) fail(ErrorKind::length, "rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace tsf
