#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tsf/arima.hpp"
#include "tsf/checkpoint.hpp"
#include "tsf/config.hpp"
#include "tsf/eval.hpp"
#include "tsf/lstm.hpp"
#include "tsf/parallel.hpp"
#include "tsf/pipeline.hpp"
#include "tsf/seq2seq.hpp"
#include "tsf/train.hpp"
#include "tsf/transformer.hpp"

namespace tsf {

/// Per-region CSS fits; forecasts condition on the region's scaled history.
struct ArimaBank {
  std::map<std::string, ArimaSpec> specs;
  std::map<std::string, std::string> notes;  // e.g. non-converged regions
};

using ModelVariant = std::variant<TransformerModel, LstmForecaster, Seq2SeqForecaster, ArimaBank>;

struct TrainedModel {
  RunConfig config;
  std::vector<std::string> feature_names;
  std::vector<ScalerParams> scalers;
  ModelVariant model;
  TrainResult result;
};

inline constexpr AdamConfig kBaselineAdam{0.9, 0.999, 1e-8};
inline constexpr double kBaselineLearningRate = 0.02;

inline PipelineOptions pipeline_options(const RunConfig& c) {
  PipelineOptions o;
  o.n_in = c.n_in;
  o.horizon = c.horizon;
  o.features = c.feature_spec();
  o.degenerate = c.degenerate == "constant" ? DegeneratePolicy::constant_half : DegeneratePolicy::error;
  o.interpolate_missing = c.interpolate_missing;
  return o;
}

inline PreparedData load_data(const RunConfig& c, const std::vector<ScalerParams>* fixed_scalers = nullptr) {
  if (c.data.empty()) fail(ErrorKind::config, "no data file given (--data)");
  const IngestResult ingest = ingest_csv(c.data, c.columns);
  return prepare_data(ingest.series, pipeline_options(c), fixed_scalers);
}

inline TransformerConfig transformer_config(const RunConfig& c, std::size_t arity) {
  TransformerConfig t;
  t.d_model = c.d_model;
  t.n_heads = c.n_heads;
  t.n_layers = c.n_layers;
  t.d_ff = c.d_ff;
  t.dropout = c.dropout;
  t.n_in = c.n_in;
  t.horizon = c.horizon;
  t.feature_arity = arity;
  t.positional_encoding = c.positional_encoding;
  return t;
}

inline LstmConfig lstm_config(const RunConfig& c, std::size_t arity) {
  LstmConfig l;
  l.layer_sizes = c.lstm_layers;
  l.n_in = c.n_in;
  l.horizon = c.horizon;
  l.feature_arity = arity;
  l.dropout = c.dropout;
  l.learning_rate = c.lr.value_or(kBaselineLearningRate);
  return l;
}

inline Seq2SeqConfig seq2seq_config(const RunConfig& c, std::size_t arity) {
  Seq2SeqConfig s;
  s.dense_units = c.seq2seq_dense;
  s.gru_units = c.seq2seq_gru;
  s.attention_units = c.seq2seq_gru;
  s.n_in = c.n_in;
  s.horizon = c.horizon;
  s.feature_arity = arity;
  s.dropout = c.dropout;
  s.learning_rate = c.lr.value_or(kBaselineLearningRate);
  s.teacher_forcing = c.teacher_forcing;
  return s;
}

inline ArimaSpec arima_order(const RunConfig& c) {
  ArimaSpec s;
  s.p = c.arima_p;
  s.d = c.arima_d;
  s.q = c.arima_q;
  s.constant = c.arima_constant;
  return s;
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.seed = Rng(c.seed).split(0x545241494eULL).next_u64();
  t.patience = c.patience;
  t.validation_fraction = c.validation_fraction;
  t.huber_delta = c.huber_delta;
  const bool transformer = c.model == "transformer";
  if (c.loss == "auto")
    t.loss = c.model == "lstm" ? LossKind::huber : LossKind::mse;
  else
    t.loss = c.loss == "huber" ? LossKind::huber : LossKind::mse;
  if (transformer) {
    t.learning_rate = c.lr ? LearningRate::constant(*c.lr) : LearningRate::warmup(c.d_model, c.warmup_steps);
    t.adam = AdamConfig{};
  } else {
    t.learning_rate = LearningRate::constant(c.lr.value_or(kBaselineLearningRate));
    t.adam = kBaselineAdam;
  }
  return t;
}

/// Freshly initialized model for a config; weights come from the seed.
inline ModelVariant build_model(const RunConfig& c, std::size_t arity) {
  Rng rng = Rng(c.seed).split(0x494e4954ULL);
  if (c.model == "transformer") return TransformerModel(transformer_config(c, arity), rng);
  if (c.model == "lstm") return LstmForecaster(lstm_config(c, arity), rng);
  if (c.model == "seq2seq") return Seq2SeqForecaster(seq2seq_config(c, arity), rng);
  if (c.model == "arima") return ArimaBank{};
  fail(ErrorKind::config, "unknown model '" + c.model + "' (valid: transformer, lstm, seq2seq, arima)");
}

/// Region's target series in scaled units, source positions [0, end).
inline std::vector<double> scaled_history(const PreparedData& data, const RegionData& rd, std::size_t end) {
  std::vector<double> h(end);
  for (std::size_t t = 0; t < end; ++t) h[t] = data.target_scaler().apply(rd.raw[t]);
  return h;
}

inline ArimaBank fit_arima_bank(const RunConfig& c, const PreparedData& data) {
  ArimaBank bank;
  ArimaFitOptions opt;
  opt.starts = c.arima_starts;
  opt.max_iterations = c.arima_max_iterations;
  for (std::size_t i = 0; i < data.regions.size(); ++i) {
    const auto& rd = data.regions[i];
    opt.seed = Rng(c.seed).split(0x4152494d41ULL, i).next_u64();
    const auto history = scaled_history(data, rd, rd.train_len);
    try {
      bank.specs[rd.region] = arima_fit(history, arima_order(c), opt);
    } catch (const ArimaConvergenceError& e) {
      // keep the best iterate; the manifest records that it did not converge
      bank.specs[rd.region] = e.best_so_far();
      bank.specs[rd.region].fitted = true;
      bank.notes[rd.region] = e.what();
    }
  }
  return bank;
}

inline TrainedModel train_model(const RunConfig& c, const PreparedData& data,
                                const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
  c.validate();
  TrainedModel tm{c, data.feature_names, data.scalers, build_model(c, data.feature_names.size()), {}};
  if (auto* bank = std::get_if<ArimaBank>(&tm.model)) {
    *bank = fit_arima_bank(c, data);
    double mean = 0.0;
    for (const auto& [r, s] : bank->specs) mean += s.sigma2;
    if (!bank->specs.empty()) tm.result.loss_curve.push_back(mean / static_cast<double>(bank->specs.size()));
    tm.result.epochs_run = 1;
    return tm;
  }
  const TrainConfig tc = train_config(c);
  std::visit(
      [&](auto& m) {
        if constexpr (!std::is_same_v<std::decay_t<decltype(m)>, ArimaBank>) tm.result = train(m, data.train, tc, on_epoch);
      },
      tm.model);
  return tm;
}

inline ParameterList model_parameters(const ModelVariant& m) {
  return std::visit(
      [](const auto& x) -> ParameterList {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ArimaBank>)
          return {};
        else
          return x.parameters();
      },
      m);
}

/// One-step predictor over test windows, in scaled units.
inline std::function<double(const Sample&)> one_step_predictor(const TrainedModel& tm, const PreparedData& data) {
  if (const auto* bank = std::get_if<ArimaBank>(&tm.model)) {
    return [bank, &data](const Sample& s) {
      const RegionData* rd = data.find_region(s.region);
      auto it = bank->specs.find(s.region);
      if (!rd || it == bank->specs.end()) fail(ErrorKind::schema, "no ARIMA fit for region '" + s.region + "'");
      return arima_forecast(it->second, scaled_history(data, *rd, s.first_target), 1)[0];
    };
  }
  return [&tm](const Sample& s) {
    return std::visit(
        [&](const auto& m) -> double {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, ArimaBank>)
            return 0.0;
          else
            return m.predict_one_step(s);
        },
        tm.model);
  };
}

inline EvalReport evaluate_model(const TrainedModel& tm, const PreparedData& data, std::size_t workers = 1) {
  return evaluate_one_step(data, one_step_predictor(tm, data), workers);
}

// ---------------------------------------------------------------- checkpoint

inline Checkpoint to_checkpoint(const TrainedModel& tm) {
  Checkpoint ck;
  for (const auto& k : RunConfig::keys()) ck.config["run." + k] = tm.config.get(k);
  std::string names;
  for (std::size_t j = 0; j < tm.feature_names.size(); ++j) names += (j ? "," : "") + tm.feature_names[j];
  ck.config["feature_names"] = names;
  for (std::size_t j = 0; j < tm.scalers.size(); ++j) {
    const std::string p = "scaler." + std::to_string(j) + ".";
    ck.config[p + "min"] = format_double(tm.scalers[j].min);
    ck.config[p + "max"] = format_double(tm.scalers[j].max);
    ck.config[p + "constant"] = tm.scalers[j].constant ? "1" : "0";
  }
  ck.config["train.epochs_run"] = std::to_string(tm.result.epochs_run);
  ck.config["train.best_epoch"] = std::to_string(tm.result.best_epoch);
  ck.config["train.steps"] = std::to_string(tm.result.steps);
  if (const auto* bank = std::get_if<ArimaBank>(&tm.model)) {
    for (const auto& [region, spec] : bank->specs) ck.config["arima." + region] = spec.to_text();
    for (const auto& [region, note] : bank->notes) ck.config["arima_note." + region] = note;
  }
  ck.store_parameters(model_parameters(tm.model));
  return ck;
}

inline TrainedModel from_checkpoint(const Checkpoint& ck) {
  TrainedModel tm;
  for (const auto& [k, v] : ck.config)
    if (k.rfind("run.", 0) == 0) tm.config.set(k.substr(4), v);
  tm.config.validate();
  for (const auto& f : split_csv_line(ck.get("feature_names"))) tm.feature_names.push_back(f);
  for (std::size_t j = 0; j < tm.feature_names.size(); ++j) {
    const std::string p = "scaler." + std::to_string(j) + ".";
    ScalerParams s;
    s.min = detail::config_real(p + "min", ck.get(p + "min"));
    s.max = detail::config_real(p + "max", ck.get(p + "max"));
    s.constant = ck.get(p + "constant") == "1";
    tm.scalers.push_back(s);
  }
  if (tm.feature_names.size() != tm.config.feature_spec().arity())
    fail(ErrorKind::schema, "checkpoint stores " + std::to_string(tm.feature_names.size()) +
                                " features but its feature spec '" + tm.config.features + "' implies " +
                                std::to_string(tm.config.feature_spec().arity()));
  tm.model = build_model(tm.config, tm.feature_names.size());
  if (auto* bank = std::get_if<ArimaBank>(&tm.model)) {
    for (const auto& [k, v] : ck.config) {
      if (k.rfind("arima.", 0) == 0) bank->specs[k.substr(6)] = ArimaSpec::from_text(v);
      if (k.rfind("arima_note.", 0) == 0) bank->notes[k.substr(11)] = v;
    }
  } else {
    ParameterList params = model_parameters(tm.model);
    ck.load_parameters(params);
  }
  tm.result.epochs_run = detail::config_size("train.epochs_run", ck.get("train.epochs_run"));
  tm.result.best_epoch = detail::config_size("train.best_epoch", ck.get("train.best_epoch"));
  tm.result.steps = detail::config_size("train.steps", ck.get("train.steps"));
  return tm;
}

// ------------------------------------------------------------------ forecast

struct ForecastRow {
  std::string region;
  int year = 0;
  int week = 0;
  std::size_t step = 0;
  double predicted = 0.0;  // original units
};

/// Forecasts `steps` weeks past the end of each region's observed series.
inline std::vector<ForecastRow> forecast_regions(const TrainedModel& tm, const PreparedData& data, std::size_t steps,
                                                 const std::string& only_region = {}) {
  const auto& scaler = data.target_scaler();
  const FeatureSpec spec = tm.config.feature_spec();
  const std::size_t a = tm.feature_names.size();
  std::vector<ForecastRow> out;
  bool matched = only_region.empty();
  for (const auto& rd : data.regions) {
    if (!only_region.empty() && rd.region != only_region) continue;
    matched = true;
    std::vector<double> scaled;
    if (const auto* bank = std::get_if<ArimaBank>(&tm.model)) {
      auto it = bank->specs.find(rd.region);
      if (it == bank->specs.end()) fail(ErrorKind::schema, "no ARIMA fit for region '" + rd.region + "'");
      scaled = arima_forecast(it->second, scaled_history(data, rd, rd.raw.size()), steps);
    } else {
      const std::size_t rows = rd.scaled_frame.rows();
      if (rows < tm.config.n_in) fail(ErrorKind::length, "region '" + rd.region + "' is shorter than n_in");
      Sample s;
      s.region = rd.region;
      s.inputs.assign(rd.scaled_frame.values.end() - static_cast<std::ptrdiff_t>(tm.config.n_in * a),
                      rd.scaled_frame.values.end());
      if (const auto* tr = std::get_if<TransformerModel>(&tm.model)) {
        std::vector<double> history = rd.raw;
        int year = rd.years.back(), week = rd.weeks.back();
        scaled = tr->generate(s.inputs, steps, [&](std::size_t, double pred) {
          history.push_back(scaler.invert(pred));
          std::tie(year, week) = next_week(year, week);
          return data.scale_row(spec.row(history, week));
        });
      } else {
        std::visit(
            [&](const auto& m) {
              using M = std::decay_t<decltype(m)>;
              if constexpr (std::is_same_v<M, LstmForecaster> || std::is_same_v<M, Seq2SeqForecaster>) {
                if (steps > tm.config.horizon)
                  fail(ErrorKind::capability, "forecast: " + std::to_string(steps) + " steps requested but the model emits " +
                                                  std::to_string(tm.config.horizon));
                auto all = m.predict(s);
                scaled.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(steps));
              }
            },
            tm.model);
      }
    }
    int year = rd.years.back(), week = rd.weeks.back();
    for (std::size_t k = 0; k < steps; ++k) {
      std::tie(year, week) = next_week(year, week);
      out.push_back({rd.region, year, week, k + 1, scaler.invert(scaled[k])});
    }
  }
  if (!matched) fail(ErrorKind::validation, "region '" + only_region + "' not found in the data");
  return out;
}

inline std::string forecast_csv(const std::vector<ForecastRow>& rows) {
  std::ostringstream o;
  o << "region,year,week,step,predicted\n";
  for (const auto& r : rows)
    o << EvalReport::csv_field(r.region) << ',' << r.year << ',' << r.week << ',' << r.step << ','
      << format_double(r.predicted) << '\n';
  return o.str();
}

// ------------------------------------------------------------ compare / sweep

struct CompareRow {
  std::string model;
  double pearson = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double pearson_change_pct = std::numeric_limits<double>::quiet_NaN();
  double rmse_change_pct = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

inline double change_pct(double m, double base) { return 100.0 * (m - base) / base; }

/// Trains all four families on one prepared dataset with the same seed.
inline std::vector<CompareRow> compare_models(const RunConfig& base, const PreparedData& data, std::size_t workers) {
  std::vector<CompareRow> rows(kModelFamilies.size());
  const std::vector<std::string> order{"arima", "lstm", "seq2seq", "transformer"};
  parallel_for(order.size(), workers, [&](std::size_t i) {
    CompareRow& row = rows[i];
    row.model = order[i];
    try {
      RunConfig c = base;
      c.model = order[i];
      const TrainedModel tm = train_model(c, data);
      const EvalReport r = evaluate_model(tm, data);
      row.pearson = r.mean_pearson;
      row.rmse = r.mean_rmse;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  const CompareRow& arima = rows[0];
  for (auto& r : rows) {
    if (!r.error.empty() || !arima.error.empty()) continue;
    r.pearson_change_pct = change_pct(r.pearson, arima.pearson);
    r.rmse_change_pct = change_pct(r.rmse, arima.rmse);
  }
  return rows;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream o;
  o << "model,pearson,pearson_change_pct,rmse,rmse_change_pct\n";
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      o << r.model << ",ERROR,ERROR,ERROR,ERROR\n";
      continue;
    }
    o << r.model << ',' << format_double(r.pearson) << ',' << format_double(r.pearson_change_pct) << ','
      << format_double(r.rmse) << ',' << format_double(r.rmse_change_pct) << '\n';
  }
  return o.str();
}

struct SweepRow {
  std::size_t dimension = 0;
  double pearson = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

/// One transformer per embedding dimension (lag from the config), each with
/// its own derived seed. Failures become error rows.
inline std::vector<SweepRow> tde_sweep(const RunConfig& base, const std::vector<RawSeries>& series,
                                       std::size_t workers) {
  base.validate_dims();
  std::vector<SweepRow> rows(base.dims.size());
  parallel_for(base.dims.size(), workers, [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.dimension = base.dims[i];
    try {
      RunConfig c = base;
      c.model = "transformer";
      c.features = "tde:" + std::to_string(base.dims[i]) + "," + std::to_string(base.tde_lag);
      c.seed = Rng(base.seed).split(0x544445ULL, base.dims[i]).next_u64();
      const PreparedData data = prepare_data(series, pipeline_options(c));
      const TrainedModel tm = train_model(c, data);
      const EvalReport r = evaluate_model(tm, data);
      row.pearson = r.mean_pearson;
      row.rmse = r.mean_rmse;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream o;
  o << "dimension,pearson,rmse\n";
  for (const auto& r : rows) {
    if (!r.error.empty())
      o << r.dimension << ",ERROR,ERROR\n";
    else
      o << r.dimension << ',' << format_double(r.pearson) << ',' << format_double(r.rmse) << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------- files

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

inline std::filesystem::path ensure_out_dir(const std::string& dir) {
  if (dir.empty()) fail(ErrorKind::config, "no output directory given (--out)");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

}  // namespace tsf
