#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsf/nn.hpp"

namespace tsf {

struct WarmupSchedule {
  std::size_t d_model = 64;
  std::size_t warmup_steps = 5000;
};

/// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5): linear warmup, then
/// inverse square-root decay, peaking at step == warmup.
inline double lr_at_step(std::size_t step, const WarmupSchedule& s) {
  if (step == 0) fail(ErrorKind::parameter, "lr_at_step: steps are numbered from 1");
  if (s.d_model == 0 || s.warmup_steps == 0) fail(ErrorKind::parameter, "lr_at_step: d_model and warmup must be positive");
  const double st = static_cast<double>(step);
  const double w = static_cast<double>(s.warmup_steps);
  return std::pow(static_cast<double>(s.d_model), -0.5) * std::min(std::pow(st, -0.5), st * std::pow(w, -1.5));
}

/// Either a fixed rate or the warmup schedule.
struct LearningRate {
  bool use_schedule = false;
  double fixed = 0.02;
  WarmupSchedule schedule;

  static LearningRate constant(double lr) { return {false, lr, {}}; }
  static LearningRate warmup(std::size_t d_model, std::size_t warmup_steps) {
    return {true, 0.0, {d_model, warmup_steps}};
  }
  double at(std::size_t step) const { return use_schedule ? lr_at_step(step, schedule) : fixed; }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamState& state() const { return state_; }
  const AdamConfig& config() const { return cfg_; }

  void step(ParameterList& params, double lr) {
    if (state_.m.empty()) {
      for (const auto& p : params) {
        state_.m.emplace_back(p.tensor.size(), 0.0);
        state_.v.emplace_back(p.tensor.size(), 0.0);
      }
    }
    if (state_.m.size() != params.size()) fail(ErrorKind::contract, "adam: parameter list changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto g = params[k].tensor.grad();
      for (double gi : g)
        if (!std::isfinite(gi)) fail(ErrorKind::numeric, "adam: poisoned gradient in parameter '" + params[k].name + "'");
    }
    ++state_.t;
    const double t = static_cast<double>(state_.t);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto g = params[k].tensor.grad();
      auto w = params[k].tensor.mutable_data();
      auto& m = state_.m[k];
      auto& v = state_.v[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

inline void zero_grads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace tsf
