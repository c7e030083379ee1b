#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsf/ops.hpp"

namespace tsf {

enum class LossKind { mse, huber };

inline void require_loss_shapes(const Tensor& pred, std::span<const double> target, const char* name) {
  if (pred.size() != target.size())
    fail(ErrorKind::dimension, std::string(name) + ": " + std::to_string(pred.size()) + " predictions vs " +
                                   std::to_string(target.size()) + " targets");
}

inline Tensor mse_loss(const Tensor& pred, std::span<const double> target) {
  require_loss_shapes(pred, target, "mse_loss");
  return mean(square(sub(pred, Tensor(pred.shape(), std::vector<double>(target.begin(), target.end())))));
}

/// Mean over elements of 0.5 e^2 for |e| <= delta, delta (|e| - 0.5 delta) beyond.
inline Tensor huber_loss(const Tensor& pred, std::span<const double> target, double delta = 1.0) {
  require_loss_shapes(pred, target, "huber_loss");
  if (!(delta > 0.0)) fail(ErrorKind::parameter, "huber_loss: delta must be positive");
  const std::size_t n = pred.size();
  double total = 0.0;
  std::vector<double> slope(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred[i] - target[i];
    if (std::abs(e) <= delta) {
      total += 0.5 * e * e;
      slope[i] = e;
    } else {
      total += delta * (std::abs(e) - 0.5 * delta);
      slope[i] = e > 0 ? delta : -delta;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_op_result({1}, {total * inv_n}, "huber_loss", {pred}, [slope = std::move(slope), inv_n](detail::Node& node) {
    detail::with_input_grad(node, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[0] * slope[i] * inv_n;
    });
  });
}

inline Tensor compute_loss(LossKind kind, const Tensor& pred, std::span<const double> target, double huber_delta = 1.0) {
  return kind == LossKind::mse ? mse_loss(pred, target) : huber_loss(pred, target, huber_delta);
}

}  // namespace tsf
