// End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per criterion;
// exits non-zero if any gating criterion fails.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tsf/experiment.hpp"
#include "tsf/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace tsf;

namespace {

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Skipped : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

std::string num(double v) { return format_double(v); }

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

Tensor readout(const Tensor& y, Rng& rng) { return dot(y, random_tensor(y.shape(), rng)); }

std::vector<Tensor> tensors_of(ParameterList params) {
  std::vector<Tensor> out;
  for (auto& p : params) out.push_back(p.tensor);
  return out;
}

Sample random_window(std::size_t n_in, std::size_t horizon, std::size_t arity, Rng& rng) {
  Sample s;
  for (std::size_t i = 0; i < n_in * arity; ++i) s.inputs.push_back(rng.uniform());
  for (std::size_t i = 0; i < horizon * arity; ++i) s.target_features.push_back(rng.uniform());
  for (std::size_t m = 0; m < horizon; ++m) s.targets.push_back(s.target_features[m * arity]);
  return s;
}

TransformerConfig tiny_transformer(std::size_t arity) {
  TransformerConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.dropout = 0.2;
  c.n_in = 5;
  c.horizon = 4;
  c.feature_arity = arity;
  return c;
}

std::vector<double> simulate_arma(double c, std::vector<double> phi, std::vector<double> theta, std::size_t n,
                                  std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t burn = 500;
  std::vector<double> x(n + burn, 0.0), e(n + burn, 0.0);
  for (std::size_t t = 0; t < n + burn; ++t) {
    e[t] = rng.normal();
    double v = c + e[t];
    for (std::size_t i = 0; i < phi.size() && i < t; ++i) v += phi[i] * x[t - 1 - i];
    for (std::size_t j = 0; j < theta.size() && j < t; ++j) v += theta[j] * e[t - 1 - j];
    x[t] = v;
  }
  return {x.begin() + burn, x.end()};
}

// ---- 1: gradients ----

std::string gradient_suite() {
  const std::clock_t cpu0 = std::clock();
  using Case = std::function<double(Rng&)>;
  std::vector<std::pair<std::string, Case>> cases{
      {"matmul",
       [](Rng& r) {
         auto a = random_tensor({3, 4}, r).clone(true), b = random_tensor({4, 2}, r).clone(true);
         Rng ro = r.split(1);
         return finite_difference_check([&] { Rng q = ro; return readout(matmul(a, b), q); }, {a, b});
       }},
      {"elementwise",
       [](Rng& r) {
         auto a = random_tensor({2, 3}, r).clone(true), b = random_tensor({2, 3}, r).clone(true),
              bias = random_tensor({3}, r).clone(true);
         Rng ro = r.split(1);
         return finite_difference_check(
             [&] { Rng q = ro; return readout(scale(add_bias(mul(add(a, b), sub(a, b)), bias), -1.3), q); }, {a, b, bias});
       }},
      {"activations",
       [](Rng& r) {
         auto a = random_tensor({6}, r).clone(true);
         Rng ro = r.split(1);
         return finite_difference_check([&] { Rng q = ro; return readout(mul(tanh(a), add(sigmoid(a), relu(a))), q); },
                                        {a});
       }},
      {"softmax",
       [](Rng& r) {
         auto a = random_tensor({3, 5}, r).clone(true), b = random_tensor({4, 4}, r).clone(true);
         Rng ro = r.split(1);
         const auto mask = look_ahead_mask(4);
         return finite_difference_check(
             [&] { Rng q = ro; return add(readout(softmax(a), q), readout(masked_softmax(b, mask), q)); }, {a, b});
       }},
      {"layer_norm",
       [](Rng& r) {
         auto x = random_tensor({3, 6}, r).clone(true), g = random_tensor({6}, r).clone(true),
              b = random_tensor({6}, r).clone(true);
         Rng ro = r.split(1);
         return finite_difference_check([&] { Rng q = ro; return readout(layer_norm(x, g, b), q); }, {x, g, b});
       }},
      {"dropout",
       [](Rng& r) {
         auto x = random_tensor({10}, r).clone(true);
         Rng ro = r.split(1), masks = r.split(2);
         return finite_difference_check([&] { Rng q = ro, m = masks; return readout(dropout(x, 0.3, true, m), q); }, {x});
       }},
      {"slices",
       [](Rng& r) {
         auto a = random_tensor({4, 6}, r).clone(true);
         Rng ro = r.split(1);
         return finite_difference_check(
             [&] {
               Rng q = ro;
               auto joined = concat_cols({slice_cols(a, 3, 3), slice_cols(a, 0, 2)});
               auto stacked = concat_rows({slice_rows(joined, 2, 2), slice_rows(joined, 0, 1)});
               return add(readout(transpose(stacked), q), square(element(reshape(a, {24}), 7)));
             },
             {a});
       }},
      {"transformer",
       [](Rng& r) {
         const auto c = tiny_transformer(2);
         TransformerModel model(c, r);
         const auto s = random_window(c.n_in, c.horizon, 2, r);
         const Rng drop = r.split(1);
         return finite_difference_check([&] { Rng q = drop; return mse_loss(model.forward(s, true, q), s.targets); },
                                        tensors_of(model.parameters()));
       }},
      {"lstm",
       [](Rng& r) {
         LstmConfig c;
         c.layer_sizes = {5, 3};
         c.n_in = 4;
         c.horizon = 4;
         LstmForecaster model(c, r);
         const auto s = random_window(4, 4, 1, r);
         const Rng drop = r.split(1);
         return finite_difference_check(
             [&] { Rng q = drop; return huber_loss(model.forward(s, true, q), s.targets, 0.1); },
             tensors_of(model.parameters()));
       }},
      {"seq2seq_attention",
       [](Rng& r) {
         Seq2SeqConfig c;
         c.dense_units = 3;
         c.gru_units = 4;
         c.attention_units = 3;
         c.n_in = 4;
         c.horizon = 4;
         c.teacher_forcing = r.below(2) == 0;
         Seq2SeqForecaster model(c, r);
         const auto s = random_window(4, 4, 1, r);
         const Rng drop = r.split(1);
         return finite_difference_check([&] { Rng q = drop; return mse_loss(model.forward(s, true, q), s.targets); },
                                        tensors_of(model.parameters()));
       }},
      {"arima_css",
       [](Rng& r) {
         const std::size_t p = r.below(4), q = r.below(4);
         const bool constant = r.below(2) == 0 || p + q == 0;
         const auto x = simulate_arma(0.2, {0.4}, {0.2}, 200, r.next_u64());
         std::vector<double> w(p + q + (constant ? 1 : 0));
         for (auto& v : w) v = r.uniform(-0.3, 0.3);
         Tensor params({w.size()}, w, true);
         return finite_difference_check([&](const Tensor& t) { return css_objective(t, x, p, q, constant); }, params);
       }},
  };
  std::string worst_name;
  double worst = 0.0;
  for (const auto& [name, run] : cases)
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(7000 + seed);
      const double err = run(rng);
      if (!(err <= worst)) {
        worst = err;
        worst_name = name;
      }
      require(err < 1e-4, name + " seed " + std::to_string(seed) + ": relative error " + num(err));
    }
  const double cpu = static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC;
  require(cpu < 300.0, "suite took " + num(cpu) + " s CPU");
  return std::to_string(cases.size()) + " cases x 20 seeds, max relative error " + num(worst) + " (" + worst_name +
         "), " + num(std::round(cpu * 10) / 10) + " s CPU";
}

// ---- 2: causality ----

std::string causality_suite() {
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = tiny_transformer(2);
    Rng rng(100 + seed);
    TransformerModel model(c, rng);
    Rng unused(0);
    auto rows = [&](std::size_t n) { return random_tensor({n, 2}, rng, -1, 1); };
    const auto memory = model.encode(rows(5), false, unused);
    const auto mask = look_ahead_mask(4);
    const auto base_in = rows(4);
    const auto base = model.decode(base_in, memory, false, unused, &mask);
    for (std::size_t k = 0; k < 4; ++k)
      for (unsigned subset = 1; subset < 16; ++subset) {
        bool future_only = true;
        for (std::size_t p = 0; p <= k; ++p) future_only = future_only && !(subset >> p & 1U);
        if (!future_only) continue;
        std::vector<double> v = base_in.values();
        for (std::size_t p = 0; p < 4; ++p)
          if (subset >> p & 1U)
            for (std::size_t a = 0; a < 2; ++a) v[p * 2 + a] += rng.uniform(-5, 5);
        const auto out = model.decode(Tensor({4, 2}, v), memory, false, unused, &mask);
        for (std::size_t q = 0; q <= k; ++q) {
          require(out[q] == base[q], "position " + std::to_string(q) + " changed when perturbing subset " +
                                         std::to_string(subset));
          ++checks;
        }
      }
  }
  return std::to_string(checks) + " unperturbed outputs bit-identical over 10 models";
}

// ---- 3: pipeline oracles ----

RawSeries weekly(const std::string& region, const std::vector<double>& v) {
  RawSeries s{region, {}};
  int year = 2010, week = 40;
  for (double x : v) {
    s.points.push_back({year, week, x});
    std::tie(year, week) = next_week(year, week);
  }
  return s;
}

std::string pipeline_oracles() {
  Rng rng(31);
  auto series = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(0.0, 10.0);
    return v;
  };
  double worst_roundtrip = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // sliding windows
    const std::size_t n_in = 1 + rng.below(12), m = 1 + rng.below(5), len = n_in + m + rng.below(40);
    const auto v = series(len);
    const auto ds = make_windows(v, n_in, m);
    require(ds.size() == len - (n_in + m) + 1, "window count");
    for (std::size_t k = 0; k < ds.size(); ++k) {
      for (std::size_t i = 0; i < n_in; ++i) require(ds.samples[k].inputs[i] == v[k + i], "window input");
      for (std::size_t j = 0; j < m; ++j) require(ds.samples[k].targets[j] == v[k + n_in + j], "window target");
    }
    // TDE identity
    const std::size_t d = 1 + rng.below(6), tau = 1 + rng.below(3);
    const auto x = series(d * tau + rng.below(30));
    const auto f = make_tde(x, {d, tau});
    require(f.rows() == x.size() - (d - 1) * tau, "tde rows");
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t j = 0; j < d; ++j) require(f.at(r, j) == x[f.time_index[r] - j * tau], "tde value");
    // scaler: brute-force fit over training prefixes of every region, exact application
    const std::size_t n = 30 + rng.below(80);
    const auto a = series(n), b = series(n + 7);
    const auto prepared = prepare_data({weekly("A", a), weekly("B", b)}, {10, 4, FeatureSpec::univariate()});
    double lo = 1e300, hi = -1e300;
    for (const auto* s : {&a, &b})
      for (std::size_t t = 0; t < 2 * s->size() / 3; ++t) {
        lo = std::min(lo, (*s)[t]);
        hi = std::max(hi, (*s)[t]);
      }
    require(prepared.scalers[0].min == lo && prepared.scalers[0].max == hi, "scaler extrema");
    for (const auto& rd : prepared.regions)
      for (std::size_t t = 0; t < rd.raw.size(); ++t) {
        require(rd.scaled_frame.at(t, 0) == (rd.raw[t] - lo) / (hi - lo), "scaled value");
        const double back = prepared.scalers[0].invert(rd.scaled_frame.at(t, 0));
        worst_roundtrip = std::max(worst_roundtrip, std::abs(back - rd.raw[t]) / std::max(1.0, std::abs(rd.raw[t])));
      }
    require(worst_roundtrip < 1e-12, "scaler round trip error " + num(worst_roundtrip));
    // boundary isolation
    for (const auto& rd : prepared.regions) {
      std::size_t max_train = 0, min_test = rd.raw.size();
      for (const auto& s : prepared.train.samples)
        if (s.region == rd.region) max_train = std::max(max_train, s.first_target + 3);
      for (const auto& s : prepared.test.samples)
        if (s.region == rd.region) min_test = std::min(min_test, s.first_target);
      require(rd.train_len == 2 * rd.raw.size() / 3, "split point");
      require(max_train < rd.train_len && min_test == rd.train_len, "train/test windows cross the boundary");
    }
  }
  return "100 randomized series: windows, TDE, scaler fit/apply, boundary exact; round trip within " +
         num(worst_roundtrip) + " relative";
}

// ---- 4: sinusoid ----

std::string sinusoid() {
  RawSeries s{"sine", {}};
  int year = 2010, week = 1;
  for (int t = 0; t < 416; ++t) {
    s.points.push_back({year, week, 10.0 + 5.0 * std::sin(2.0 * M_PI * t / 52.0)});
    std::tie(year, week) = next_week(year, week);
  }
  RunConfig c;
  c.model = "transformer";
  c.d_model = 16;
  c.d_ff = 64;
  c.n_layers = 1;
  c.n_heads = 2;
  c.dropout = 0.0;
  c.warmup_steps = 200;
  c.epochs = 100;
  c.batch_size = 16;
  c.patience = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = prepare_data({s}, pipeline_options(c));
  const auto tm = train_model(c, data);
  const auto report = evaluate_model(tm, data, worker_count());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string detail = "pearson " + num(report.mean_pearson) + ", rmse " + num(report.mean_rmse) +
                             " (limit 0.1), " + num(std::round(secs)) + " s";
  require(report.mean_pearson >= 0.99 && report.mean_rmse <= 0.1 && secs < 1800.0, detail);
  return detail;
}

// ---- 5: ARIMA ----

std::string arima_recovery() {
  ArimaSpec ar;
  ar.p = 1;
  ar.q = 0;
  const auto fit1 = arima_fit(simulate_arma(0.0, {0.8}, {}, 2000, 2), ar);
  require(std::abs(fit1.phi[0] - 0.8) <= 0.05, "AR(1) phi " + num(fit1.phi[0]));
  ArimaSpec arma;
  arma.p = 1;
  arma.q = 1;
  const auto fit2 = arima_fit(simulate_arma(0.0, {0.5}, {0.3}, 5000, 5), arma);
  require(std::abs(fit2.phi[0] - 0.5) <= 0.1 && std::abs(fit2.theta[0] - 0.3) <= 0.1,
          "ARMA(1,1) phi " + num(fit2.phi[0]) + " theta " + num(fit2.theta[0]));
  Rng rng(16);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    ArimaSpec s = ar;
    const double phi = rng.uniform(-0.95, 0.95), c = rng.uniform(-2, 2), xt = rng.uniform(-5, 5);
    s.phi = {phi};
    s.c = c;
    s.fitted = true;
    const auto f = arima_forecast(s, std::vector<double>{rng.uniform(), xt});
    for (std::size_t k = 1; k <= 4; ++k) {
      const double pk = std::pow(phi, static_cast<double>(k));
      worst = std::max(worst, std::abs(f[k - 1] - (c * (1.0 - pk) / (1.0 - phi) + pk * xt)));
    }
  }
  require(worst <= 1e-12, "AR(1) forecast deviates by " + num(worst));
  return "phi " + num(fit1.phi[0]) + "; phi " + num(fit2.phi[0]) + " theta " + num(fit2.theta[0]) +
         "; closed form within " + num(worst);
}

// ---- 6: schedule / optimizer ----

std::string schedule_optimizer() {
  const WarmupSchedule s{64, 5000};
  const double at = lr_at_step(5000, s);
  require(std::abs(at - 1.7678e-3) <= 1e-7, "lr(5000) = " + num(at));
  std::size_t arg = 0;
  double best = -1;
  for (std::size_t t = 1; t <= 15000; ++t)
    if (lr_at_step(t, s) > best) {
      best = lr_at_step(t, s);
      arg = t;
    }
  require(arg == 5000, "schedule peaks at " + std::to_string(arg));

  auto param = [](std::vector<double> w, std::vector<double> g) {
    const std::size_t n = w.size();
    Tensor t({n}, std::move(w), true);
    backward(sum(mul(t, Tensor({n}, std::move(g)))));
    return ParameterList{{"w", t}};
  };
  auto still = param({1.0, -2.0}, {0.0, 0.0});
  Adam a1;
  a1.step(still, 0.1);
  require(still[0].tensor.values() == std::vector<double>{1.0, -2.0}, "zero gradient moved parameters");
  auto moved = param({1.0, -2.0}, {3.0, -0.01});
  Adam a2;
  a2.step(moved, 0.01);
  const double d0 = 1.0 - moved[0].tensor[0], d1 = moved[0].tensor[1] + 2.0;
  require(std::abs(d0 - 0.01) < 1e-6 && std::abs(d1 - 0.01) < 1e-5,
          "first step moved by " + num(d0) + ", " + num(d1));
  return "lr(5000) = " + num(at) + ", argmax 5000, Adam no-op and first step " + num(d0);
}

// ---- 7: metrics ----

double pearson_reference(const std::vector<double>& x, const std::vector<double>& y) {
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

double rmse_reference(const std::vector<double>& x, const std::vector<double>& y) {
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<long double>(x[i] - y[i]) * (x[i] - y[i]);
  return static_cast<double>(std::sqrt(s / static_cast<long double>(x.size())));
}

std::string metric_checks() {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(50);
    std::vector<double> x(n), y(n);
    const double mix = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = mix * x[i] + rng.normal();
    }
    worst = std::max({worst, std::abs(pearson(x, y) - pearson_reference(x, y)),
                      std::abs(rmse(x, y) - rmse_reference(x, y))});
  }
  require(worst <= 1e-10, "max deviation " + num(worst));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(64), y(64), ax(64);
    for (std::size_t i = 0; i < 64; ++i) {
      x[i] = static_cast<double>(rng.below(256)) / 16.0;
      y[i] = static_cast<double>(rng.below(256)) / 16.0;
    }
    const double a = trial % 2 ? 4.0 : 0.25, b = static_cast<double>(rng.below(64)) - 32.0;
    for (std::size_t i = 0; i < 64; ++i) ax[i] = a * x[i] + b;
    require(pearson(ax, y) == pearson(x, y), "affine invariance not exact");
  }
  return "1000 pairs within " + num(worst) + "; affine invariance exact on 200 dyadic cases";
}

// ---- 8: real data (soft) ----

std::string real_data_ordering() {
  const char* path = std::getenv("TSF_ILINET_CSV");
  if (!path || !*path) throw Skipped("set TSF_ILINET_CSV to a region,year,week,value CSV to run");
  RunConfig c;
  c.data = path;
  const auto data = load_data(c);
  const auto rows = compare_models(c, data, worker_count());
  std::map<std::string, CompareRow> by;
  for (const auto& r : rows) {
    require(r.error.empty(), r.model + " failed: " + r.error);
    by[r.model] = r;
  }
  const auto& arima = by.at("arima");
  bool deep_beat_arima = true;
  for (const char* m : {"lstm", "seq2seq", "transformer"}) deep_beat_arima = deep_beat_arima && by.at(m).pearson > arima.pearson;
  bool transformer_lowest_rmse = true;
  for (const auto& [m, r] : by)
    if (m != "transformer") transformer_lowest_rmse = transformer_lowest_rmse && by.at("transformer").rmse < r.rmse;
  c.dims = {2, 4, 6, 8, 16, 32};
  const auto sweep = tde_sweep(c, ingest_csv(c.data, c.columns).series, worker_count());
  const SweepRow* best = nullptr;
  for (const auto& r : sweep) {
    require(r.error.empty() && std::isfinite(r.rmse), "dimension " + std::to_string(r.dimension) + " failed");
    if (!best || r.rmse < best->rmse) best = &r;
  }
  const std::string detail = "deep > arima pearson: " + std::string(deep_beat_arima ? "yes" : "no") +
                             ", transformer lowest rmse: " + (transformer_lowest_rmse ? "yes" : "no") +
                             ", best tde dimension " + std::to_string(best->dimension) + " (rmse " + num(best->rmse) +
                             "; reference 8 at 0.605)";
  require(deep_beat_arima && transformer_lowest_rmse, detail);
  return detail;
}

// ---- 9: determinism ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

std::string determinism() {
  const fs::path root = fs::temp_directory_path() / ("tsf_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path csv = root / "input.csv";
  {
    std::ofstream out(csv);
    out << "region,year,week,value\n";
    for (const std::string region : {"east", "west"}) {
      int year = 2012, week = 30;
      for (int t = 0; t < 150; ++t) {
        const double v = (region == "east" ? 3.0 : 1.5) * (2.0 + std::sin(2.0 * M_PI * t / 52.0)) + 0.05 * std::cos(t);
        out << region << ',' << year << ',' << week << ',' << v << '\n';
        std::tie(year, week) = next_week(year, week);
      }
    }
  }
  const std::string small = " --seed 5 --epochs 2 --set d_model=8 --set d_ff=16 --set n_layers=1 --set n_heads=2"
                            " --set lstm_layers=6,4 --set seq2seq_dense=4 --set seq2seq_gru=6 --set arima_p=2 --set arima_q=1";
  const std::string input = " --data " + csv.string();
  std::vector<std::pair<std::string, std::string>> commands;
  for (const std::string model : {"transformer", "lstm", "seq2seq", "arima"}) {
    const std::string ck = (root / ("train_" + model)).string();
    commands.push_back({"train_" + model, "train --model " + model + input + small + " --out " + ck});
    commands.push_back({"evaluate_" + model, "evaluate --checkpoint " + ck + input + " --out OUT"});
    commands.push_back({"forecast_" + model, "forecast --checkpoint " + ck + input + " --steps 3 --out OUT"});
  }
  commands.push_back({"compare", "compare" + input + small + " --out OUT"});
  commands.push_back({"tde_sweep", "tde-sweep --dims 2,4" + input + small + " --out OUT"});
  std::size_t files = 0;
  for (auto& [name, args] : commands) {
    const fs::path out = root / name;
    const auto pos = args.find("OUT");
    if (pos != std::string::npos) args.replace(pos, 3, out.string());
    std::map<std::string, std::string> first;
    for (int run = 0; run < 2; ++run) {
      if (run == 1 && name.rfind("train_", 0) != 0) fs::remove_all(out);
      const std::string cmd = std::string("\"") + TSF_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      require(WIFEXITED(status) && WEXITSTATUS(status) == 0, name + " exited with status " + std::to_string(status));
      auto snap = snapshot(out);
      if (run == 0) {
        first = std::move(snap);
      } else {
        for (const auto& [file, bytes] : first)
          require(snap.count(file) && snap.at(file) == bytes, name + ": " + file + " differs between runs");
        files += first.size();
      }
    }
  }
  fs::remove_all(root);
  return std::to_string(commands.size()) + " commands run twice, " + std::to_string(files) + " artifacts byte-identical";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> run;
    bool gating;
  };
  const std::vector<Criterion> criteria{
      {1, "finite-difference gradient suite", gradient_suite, true},
      {2, "decoder causality", causality_suite, true},
      {3, "pipeline oracles", pipeline_oracles, true},
      {4, "sinusoid end-to-end", sinusoid, true},
      {5, "ARIMA recovery and forecast", arima_recovery, true},
      {6, "learning-rate schedule and Adam", schedule_optimizer, true},
      {7, "metric checks", metric_checks, true},
      {8, "real-data model ordering (soft)", real_data_ordering, false},
      {9, "determinism", determinism, true},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string status, detail;
    try {
      detail = c.run();
      status = "PASS";
    } catch (const Skipped& e) {
      status = "SKIP";
      detail = e.what();
    } catch (const std::exception& e) {
      status = "FAIL";
      detail = e.what();
      if (c.gating) ++failures;
    }
    std::cout << status << " [" << c.id << "] " << c.name << ": " << detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
