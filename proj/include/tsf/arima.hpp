#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tsf/format.hpp"
#include "tsf/ops.hpp"

namespace tsf {

struct ArimaSpec {
  std::size_t p = 3;
  std::size_t d = 0;
  std::size_t q = 3;
  bool constant = true;
  std::vector<double> phi;    // AR coefficients, phi_1..phi_p
  std::vector<double> theta;  // MA coefficients, theta_1..theta_q
  double c = 0.0;
  double sigma2 = 0.0;
  bool fitted = false;
  bool stationary = true;  // AR polynomial roots outside the unit circle

  std::size_t free_parameters() const { return p + q + (constant ? 1 : 0); }

  /// "key=value" lines; lists are comma separated.
  std::string to_text() const {
    auto list = [](const std::vector<double>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
      return s;
    };
    std::ostringstream o;
    o << "p=" << p << "\nd=" << d << "\nq=" << q << "\nconstant=" << (constant ? 1 : 0) << "\nphi=" << list(phi)
      << "\ntheta=" << list(theta) << "\nc=" << format_double(c) << "\nsigma2=" << format_double(sigma2)
      << "\nfitted=" << (fitted ? 1 : 0) << "\nstationary=" << (stationary ? 1 : 0) << "\n";
    return o.str();
  }

  static ArimaSpec from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    auto number = [](const std::string& key, const std::string& v) {
      const auto d = parse_double(v);
      if (!d) fail(ErrorKind::schema, "arima spec: bad number '" + v + "' for " + key);
      return *d;
    };
    auto integer = [](const std::string& key, const std::string& v) {
      const auto d = parse_int(v);
      if (!d) fail(ErrorKind::schema, "arima spec: bad integer '" + v + "' for " + key);
      return *d;
    };
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      line = std::string(trim(line));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorKind::schema, "arima spec: malformed line '" + line + "'");
      kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }
    auto order = [&](const char* key, std::size_t fallback) -> std::size_t {
      auto it = kv.find(key);
      if (it == kv.end()) return fallback;
      const long long v = integer(key, it->second);
      if (v < 0) fail(ErrorKind::config, std::string("arima spec: ") + key + " must be >= 0");
      return static_cast<std::size_t>(v);
    };
    auto list = [&](const char* key) {
      std::vector<double> out;
      auto it = kv.find(key);
      if (it == kv.end() || it->second.empty()) return out;
      for (const auto& f : split_csv_line(it->second)) out.push_back(number(key, f));
      return out;
    };
    auto flag = [&](const char* key, bool fallback) {
      auto it = kv.find(key);
      return it == kv.end() ? fallback : integer(key, it->second) != 0;
    };
    ArimaSpec s;
    s.p = order("p", 3);
    s.d = order("d", 0);
    s.q = order("q", 3);
    s.constant = flag("constant", true);
    s.phi = list("phi");
    s.theta = list("theta");
    if (kv.count("c")) s.c = number("c", kv["c"]);
    if (kv.count("sigma2")) s.sigma2 = number("sigma2", kv["sigma2"]);
    s.fitted = flag("fitted", false);
    s.stationary = flag("stationary", true);
    if (s.fitted && (s.phi.size() != s.p || s.theta.size() != s.q))
      fail(ErrorKind::schema, "arima spec: coefficient counts do not match the order");
    return s;
  }
};

/// x_t - x_{t-1}, applied d times.
inline std::vector<double> difference(std::vector<double> x, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    if (x.size() < 2) fail(ErrorKind::length, "difference: series too short for d=" + std::to_string(d));
    for (std::size_t i = 0; i + 1 < x.size(); ++i) x[i] = x[i + 1] - x[i];
    x.pop_back();
  }
  return x;
}

/// Residuals e_t = x_t - c - sum phi_i x_{t-i} - sum theta_j e_{t-j} for
/// t >= p, with e_t = 0 before p.
inline std::vector<double> css_residuals(std::span<const double> x, std::span<const double> phi,
                                         std::span<const double> theta, double c) {
  const std::size_t p = phi.size(), q = theta.size();
  std::vector<double> e(x.size(), 0.0);
  for (std::size_t t = p; t < x.size(); ++t) {
    double v = x[t] - c;
    for (std::size_t i = 0; i < p; ++i) v -= phi[i] * x[t - 1 - i];
    for (std::size_t j = 0; j < q && j < t; ++j) v -= theta[j] * e[t - 1 - j];
    e[t] = v;
  }
  return e;
}

/// Conditional sum of squares as a fused op. params = [c?, phi_1..p,
/// theta_1..q]; returns the mean squared residual over t = p..n-1. The
/// gradient follows the residual recursion forward (sensitivity equations).
inline Tensor css_objective(const Tensor& params, std::span<const double> x, std::size_t p, std::size_t q,
                            bool constant) {
  const std::size_t k = p + q + (constant ? 1 : 0);
  if (params.size() != k)
    fail(ErrorKind::dimension, "css_objective: " + std::to_string(params.size()) + " parameters for order (" +
                                   std::to_string(p) + "," + std::to_string(q) + ")");
  if (x.size() <= p) fail(ErrorKind::length, "css_objective: series too short for p=" + std::to_string(p));
  const auto w = params.data();
  const double c = constant ? w[0] : 0.0;
  const std::size_t off = constant ? 1 : 0;
  std::span<const double> phi = w.subspan(off, p), theta = w.subspan(off + p, q);
  const std::size_t n = x.size();
  std::vector<double> e = css_residuals(x, phi, theta, c);

  // de_t/dw_k, stored per time step
  std::vector<double> sens(n * k, 0.0);
  std::vector<double> grad(k, 0.0);
  double total = 0.0;
  for (std::size_t t = p; t < n; ++t) {
    double* s = &sens[t * k];
    if (constant) s[0] = -1.0;
    for (std::size_t i = 0; i < p; ++i) s[off + i] = -x[t - 1 - i];
    for (std::size_t j = 0; j < q && j < t; ++j) s[off + p + j] = -e[t - 1 - j];
    for (std::size_t j = 0; j < q && j < t; ++j) {
      const double* prev = &sens[(t - 1 - j) * k];
      for (std::size_t m = 0; m < k; ++m) s[m] -= theta[j] * prev[m];
    }
    total += e[t] * e[t];
    for (std::size_t m = 0; m < k; ++m) grad[m] += 2.0 * e[t] * s[m];
  }
  const double inv = 1.0 / static_cast<double>(n - p);
  for (auto& g : grad) g *= inv;
  return make_op_result({1}, {total * inv}, "css", {params}, [grad = std::move(grad)](detail::Node& node) {
    detail::with_input_grad(node, 0, [&](auto& g, auto&) {
      for (std::size_t m = 0; m < g.size(); ++m) g[m] += node.grad[0] * grad[m];
    });
  });
}

/// Step-down recursion: all partial autocorrelations inside (-1, 1) iff the
/// AR polynomial 1 - sum phi_i z^i has every root outside the unit circle.
inline bool ar_stationary(std::vector<double> a) {
  for (std::size_t k = a.size(); k > 0; --k) {
    const double r = a[k - 1];
    if (!(std::abs(r) < 1.0)) return false;
    std::vector<double> next(k - 1);
    for (std::size_t j = 0; j + 1 < k; ++j) next[j] = (a[j] + r * a[k - 2 - j]) / (1.0 - r * r);
    a = std::move(next);
  }
  return true;
}

struct ArimaFitOptions {
  std::size_t starts = 8;
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-8;
  std::uint64_t seed = 0;
};

struct ArimaFitTrace {
  std::vector<double> objective;  // accepted iterates, first entry is the start
  bool converged = false;
};

/// Convergence failure; carries the best parameters seen.
class ArimaConvergenceError : public Error {
 public:
  ArimaConvergenceError(const std::string& what, ArimaSpec best) : Error(ErrorKind::convergence, what), best_(std::move(best)) {}
  const ArimaSpec& best_so_far() const { return best_; }

 private:
  ArimaSpec best_;
};

namespace detail {

inline bool css_eval(const std::vector<double>& w, std::span<const double> x, std::size_t p, std::size_t q,
                     bool constant, double& f, std::vector<double>& g) {
  try {
    Tensor params({w.size()}, w, true);
    Tensor loss = css_objective(params, x, p, q, constant);
    backward(loss);
    f = loss.item();
    g = params.grad();
    for (double v : g)
      if (!std::isfinite(v)) return false;
    return true;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numeric) throw;
    return false;
  }
}

/// Quasi-Newton (BFGS) direction with Armijo backtracking. A non-finite
/// objective counts as a rejected step. Objective values are monotone.
inline std::vector<double> css_minimize(std::vector<double> w, std::span<const double> x, std::size_t p, std::size_t q,
                                        bool constant, const ArimaFitOptions& opt, ArimaFitTrace& trace) {
  const std::size_t k = w.size();
  double f = 0.0;
  std::vector<double> g;
  if (!css_eval(w, x, p, q, constant, f, g)) {
    trace.converged = false;
    trace.objective.push_back(std::numeric_limits<double>::infinity());
    return w;
  }
  trace.objective.push_back(f);
  std::vector<double> Hinv(k * k, 0.0);
  auto reset = [&] {
    std::fill(Hinv.begin(), Hinv.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) Hinv[i * k + i] = 1.0;
  };
  reset();
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < opt.gradient_tolerance) {
      trace.converged = true;
      return w;
    }
    std::vector<double> dir(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) dir[i] -= Hinv[i * k + j] * g[j];
    double slope = 0.0;
    for (std::size_t i = 0; i < k; ++i) slope += g[i] * dir[i];
    if (!(slope < 0.0)) {
      reset();
      for (std::size_t i = 0; i < k; ++i) dir[i] = -g[i];
      slope = 0.0;
      for (std::size_t i = 0; i < k; ++i) slope += g[i] * dir[i];
    }
    double step = 1.0, f_new = 0.0;
    std::vector<double> w_new(k), g_new;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
      for (std::size_t i = 0; i < k; ++i) w_new[i] = w[i] + step * dir[i];
      if (css_eval(w_new, x, p, q, constant, f_new, g_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // no descent left along any direction we can find: a numerical minimum
      trace.converged = true;
      return w;
    }
    std::vector<double> s(k), yv(k);
    double sy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      s[i] = w_new[i] - w[i];
      yv[i] = g_new[i] - g[i];
      sy += s[i] * yv[i];
    }
    const double f_old = f;
    w = w_new;
    g = g_new;
    f = f_new;
    trace.objective.push_back(f);
    if (f_old - f <= 1e-15 * std::max(1.0, std::abs(f))) {
      trace.converged = true;
      return w;
    }
    if (sy > 1e-12) {
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      std::vector<double> hy(k, 0.0);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) hy[i] += Hinv[i * k + j] * yv[j];
      double yhy = 0.0;
      for (std::size_t i = 0; i < k; ++i) yhy += yv[i] * hy[i];
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          Hinv[i * k + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
    }
  }
  trace.converged = false;
  return w;
}

inline ArimaSpec spec_from_vector(ArimaSpec s, const std::vector<double>& w) {
  const std::size_t off = s.constant ? 1 : 0;
  s.c = s.constant ? w[0] : 0.0;
  s.phi.assign(w.begin() + static_cast<std::ptrdiff_t>(off), w.begin() + static_cast<std::ptrdiff_t>(off + s.p));
  s.theta.assign(w.begin() + static_cast<std::ptrdiff_t>(off + s.p), w.end());
  return s;
}

}  // namespace detail

struct ArimaFitResult {
  ArimaSpec spec;
  std::vector<ArimaFitTrace> traces;  // one per start
  std::size_t best_start = 0;
};

/// CSS fit with seeded multi-start; keeps the best converged start.
inline ArimaFitResult arima_fit_detailed(std::span<const double> values, ArimaSpec spec, const ArimaFitOptions& opt = {}) {
  const std::vector<double> x = difference(std::vector<double>(values.begin(), values.end()), spec.d);
  const std::size_t p = spec.p, q = spec.q;
  if (x.size() < 2 * (p + q) + 2)
    fail(ErrorKind::length, "arima_fit: " + std::to_string(x.size()) + " points is too few for order (" +
                                std::to_string(p) + "," + std::to_string(spec.d) + "," + std::to_string(q) + ")");
  for (double v : x)
    if (!std::isfinite(v)) fail(ErrorKind::validation, "arima_fit: non-finite value in series");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());

  const std::size_t k = spec.free_parameters();
  ArimaFitResult result;
  if (k == 0) {
    // nothing to estimate: x is white noise around zero
    double ss = 0.0;
    for (double v : x) ss += v * v;
    result.spec = spec;
    result.spec.phi.clear();
    result.spec.theta.clear();
    result.spec.c = 0.0;
    result.spec.sigma2 = ss / static_cast<double>(x.size());
    result.spec.fitted = true;
    result.traces.push_back({{result.spec.sigma2}, true});
    return result;
  }
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> best_w;
  bool any_converged = false;
  double best_any_f = std::numeric_limits<double>::infinity();
  std::vector<double> best_any_w;
  const Rng root(opt.seed, 0x41524d41ULL);
  const std::size_t starts = std::max<std::size_t>(1, opt.starts);
  for (std::size_t s = 0; s < starts; ++s) {
    std::vector<double> w(k, 0.0);
    Rng rng = root.split(s);
    double ar_sum = 0.0;
    const std::size_t off = spec.constant ? 1 : 0;
    if (s > 0) {
      for (std::size_t i = 0; i < p + q; ++i) w[off + i] = rng.uniform(-0.5, 0.5) / static_cast<double>(std::max(p, q));
      for (std::size_t i = 0; i < p; ++i) ar_sum += w[off + i];
    }
    if (spec.constant) w[0] = mean * (1.0 - ar_sum);
    ArimaFitTrace trace;
    w = detail::css_minimize(std::move(w), x, p, q, spec.constant, opt, trace);
    const double f = trace.objective.back();
    if (f < best_any_f) {
      best_any_f = f;
      best_any_w = w;
    }
    if (trace.converged && f < best_f) {
      best_f = f;
      best_w = w;
      result.best_start = s;
      any_converged = true;
    }
    result.traces.push_back(std::move(trace));
  }
  if (!any_converged) {
    ArimaSpec best = spec;
    if (!best_any_w.empty() && std::isfinite(best_any_f)) {
      best = detail::spec_from_vector(spec, best_any_w);
      best.sigma2 = best_any_f;
      best.stationary = ar_stationary(best.phi);
    }
    throw ArimaConvergenceError("arima_fit: no start converged within " + std::to_string(opt.max_iterations) +
                                    " iterations",
                                best);
  }
  result.spec = detail::spec_from_vector(spec, best_w);
  result.spec.sigma2 = best_f;
  result.spec.fitted = true;
  result.spec.stationary = ar_stationary(result.spec.phi);
  return result;
}

inline ArimaSpec arima_fit(std::span<const double> values, ArimaSpec spec, const ArimaFitOptions& opt = {}) {
  return arima_fit_detailed(values, std::move(spec), opt).spec;
}

/// Recursive conditional expectation: residuals are filtered from the
/// history, future shocks are zero. Differencing is undone at the end.
inline std::vector<double> arima_forecast(const ArimaSpec& s, std::span<const double> history, std::size_t steps = 4) {
  if (s.phi.size() != s.p || s.theta.size() != s.q)
    fail(ErrorKind::contract, "arima_forecast: spec has no fitted coefficients");
  if (history.size() < s.p + s.d || history.empty())
    fail(ErrorKind::length, "arima_forecast: history of " + std::to_string(history.size()) + " is shorter than p+d=" +
                                std::to_string(s.p + s.d));
  std::vector<std::vector<double>> levels{std::vector<double>(history.begin(), history.end())};
  for (std::size_t k = 0; k < s.d; ++k) levels.push_back(difference(levels.back(), 1));
  std::vector<double> x = levels.back();
  std::vector<double> e = css_residuals(x, s.phi, s.theta, s.c);
  const std::size_t n = x.size();
  for (std::size_t h = 0; h < steps; ++h) {
    const std::size_t t = n + h;
    double v = s.c;
    for (std::size_t i = 0; i < s.p; ++i) v += s.phi[i] * x[t - 1 - i];
    for (std::size_t j = 0; j < s.q && j < t; ++j) v += s.theta[j] * e[t - 1 - j];
    x.push_back(v);
    e.push_back(0.0);
  }
  std::vector<double> out(x.end() - static_cast<std::ptrdiff_t>(steps), x.end());
  // integrate: each level adds back its last observed value cumulatively
  for (std::size_t k = s.d; k > 0; --k) {
    double last = levels[k - 1].back();
    for (auto& v : out) {
      last += v;
      v = last;
    }
  }
  return out;
}

struct OrderScore {
  std::size_t p = 0, q = 0;
  double aic = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty when the fit succeeded
};

/// Report-only AIC/BIC over p, q <= max_order using the CSS quasi-likelihood.
inline std::vector<OrderScore> arima_order_sweep(std::span<const double> values, std::size_t d, bool constant,
                                                 std::size_t max_order = 5, const ArimaFitOptions& opt = {}) {
  std::vector<OrderScore> out;
  const std::size_t n_diff = values.size() > d ? values.size() - d : 0;
  for (std::size_t p = 0; p <= max_order; ++p)
    for (std::size_t q = 0; q <= max_order; ++q) {
      OrderScore row;
      row.p = p;
      row.q = q;
      try {
        ArimaSpec spec;
        spec.p = p;
        spec.d = d;
        spec.q = q;
        spec.constant = constant;
        const ArimaSpec fit = arima_fit(values, spec, opt);
        const double n = static_cast<double>(n_diff - p);
        const double k = static_cast<double>(fit.free_parameters() + 1);
        const double ll = n * std::log(fit.sigma2);
        row.sigma2 = fit.sigma2;
        row.aic = ll + 2.0 * k;
        row.bic = ll + k * std::log(n);
      } catch (const Error& e) {
        row.error = e.what();
      }
      out.push_back(row);
    }
  return out;
}

}  // namespace tsf
