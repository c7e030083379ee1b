// tsf: train, evaluate, forecast, tde-sweep, compare.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tsf/experiment.hpp"

namespace fs = std::filesystem;
using namespace tsf;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Flags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data, model, features, checkpoint, region, dims;
  std::optional<std::size_t> epochs, steps;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "flat key = value config file");
  cmd->add_option("--set", f.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--data", f.data, "input CSV (region,year,week,value)");
  cmd->add_flag("-v,--verbose", f.verbose, "print per-epoch progress");
}

/// Defaults, then the config file, then --set, then dedicated flags.
RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config_path.empty()) c = RunConfig::from_file(f.config_path);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "--set expects key=value, got '" + kv + "'");
    c.set(std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
  }
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.data) c.data = *f.data;
  if (f.model) c.set("model", *f.model);
  if (f.features) c.set("features", *f.features);
  if (f.checkpoint) c.set("checkpoint", *f.checkpoint);
  if (f.region) c.set("region", *f.region);
  if (f.dims) c.set("dims", *f.dims);
  if (f.epochs) c.epochs = *f.epochs;
  if (f.steps) c.steps = *f.steps;
  c.validate();
  return c;
}

std::function<void(std::size_t, double, double)> progress(bool verbose) {
  if (!verbose) return {};
  return [](std::size_t epoch, double loss, double val) {
    std::cout << "epoch " << epoch << " loss " << format_double(loss);
    if (!std::isnan(val)) std::cout << " validation " << format_double(val);
    std::cout << "\n" << std::flush;
  };
}

int cmd_train(const Flags& f) {
  const RunConfig c = resolve(f);
  const fs::path out = ensure_out_dir(c.out);
  const PreparedData data = load_data(c);
  write_text_file(out / "config.txt", c.to_text());
  write_text_file(out / "manifest", data.manifest() + "model = " + c.model + "\n");
  TrainedModel tm;
  try {
    tm = train_model(c, data, progress(f.verbose));
  } catch (const TrainingDiverged& e) {
    // keep the last good parameters on disk before reporting
    TrainedModel partial{c, data.feature_names, data.scalers, build_model(c, data.feature_names.size()), {}};
    ParameterList params = model_parameters(partial.model);
    restore(params, e.last_good());
    save_checkpoint((out / "checkpoint").string(), to_checkpoint(partial));
    throw;
  }
  save_checkpoint((out / "checkpoint").string(), to_checkpoint(tm));
  write_text_file(out / "loss.csv", loss_csv(tm.result.loss_curve));
  std::cout << "trained " << c.model << ": " << tm.result.epochs_run << " epochs, " << data.train.size()
            << " training windows -> " << out.string() << "\n";
  return 0;
}

/// Checkpoint plus the config it was trained with; --data/--out may differ.
TrainedModel load_trained(const Flags& f, RunConfig& effective) {
  std::string path = f.checkpoint.value_or("");
  if (path.empty() && !f.config_path.empty()) path = RunConfig::from_file(f.config_path).checkpoint;
  if (path.empty()) fail(ErrorKind::config, "no checkpoint given (--checkpoint)");
  if (fs::is_directory(path)) path = (fs::path(path) / "checkpoint").string();
  TrainedModel tm = from_checkpoint(load_checkpoint(path));
  effective = tm.config;
  effective.checkpoint = path;
  if (f.data) effective.data = *f.data;
  if (f.out) effective.out = *f.out;
  if (f.region) effective.region = *f.region;
  if (f.steps) effective.steps = *f.steps;
  if (f.model && *f.model != tm.config.model)
    fail(ErrorKind::schema, "checkpoint holds a " + tm.config.model + " model, --model says " + *f.model);
  if (f.features) {
    const FeatureSpec asked = FeatureSpec::parse(*f.features);
    if (asked.arity() != tm.feature_names.size() || asked.str() != tm.config.feature_spec().str())
      fail(ErrorKind::schema, "checkpoint was trained on features '" + tm.config.features + "' (arity " +
                                  std::to_string(tm.feature_names.size()) + "), requested '" + *f.features +
                                  "' (arity " + std::to_string(asked.arity()) + ")");
  }
  return tm;
}

int cmd_evaluate(const Flags& f) {
  RunConfig c;
  const TrainedModel tm = load_trained(f, c);
  const fs::path out = ensure_out_dir(c.out);
  const PreparedData data = load_data(c, &tm.scalers);
  const EvalReport report = evaluate_model(tm, data, worker_count());
  write_text_file(out / "metrics.csv", report.metrics_csv());
  write_text_file(out / "predictions.csv", report.predictions_csv());
  write_text_file(out / "summary.txt", "model = " + c.model + "\n" + report.summary());
  std::cout << "evaluated " << c.model << " on " << report.regions.size() << " regions: mean pearson "
            << format_double(report.mean_pearson) << ", mean rmse " << format_double(report.mean_rmse) << "\n";
  return 0;
}

int cmd_forecast(const Flags& f) {
  RunConfig c;
  const TrainedModel tm = load_trained(f, c);
  const fs::path out = ensure_out_dir(c.out);
  const PreparedData data = load_data(c, &tm.scalers);
  const auto rows = forecast_regions(tm, data, c.steps, c.region);
  write_text_file(out / "forecast.csv", forecast_csv(rows));
  std::cout << "forecast " << c.steps << " steps for " << rows.size() / c.steps << " regions -> "
            << (out / "forecast.csv").string() << "\n";
  return 0;
}

int cmd_tde_sweep(const Flags& f) {
  const RunConfig c = resolve(f);
  c.validate_dims();
  const fs::path out = ensure_out_dir(c.out);
  if (c.data.empty()) fail(ErrorKind::config, "no data file given (--data)");
  const IngestResult ingest = ingest_csv(c.data, c.columns);
  write_text_file(out / "config.txt", c.to_text());
  const auto rows = tde_sweep(c, ingest.series, worker_count());
  write_text_file(out / "tde_sweep.csv", sweep_csv(rows));
  std::string errors;
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (!r.error.empty()) errors += "dimension " + std::to_string(r.dimension) + ": " + r.error + "\n";
    else if (!best || r.rmse < best->rmse) best = &r;
  }
  std::string summary = "dimensions = " + std::to_string(rows.size()) + "\n";
  summary += "best_dimension_by_rmse = " + (best ? std::to_string(best->dimension) : std::string("none")) + "\n";
  if (best) summary += "best_rmse = " + format_double(best->rmse) + "\n";
  write_text_file(out / "summary.txt", summary + errors);
  std::cout << sweep_csv(rows);
  return 0;
}

int cmd_compare(const Flags& f) {
  const RunConfig c = resolve(f);
  const fs::path out = ensure_out_dir(c.out);
  const PreparedData data = load_data(c);
  write_text_file(out / "config.txt", c.to_text());
  write_text_file(out / "manifest", data.manifest());
  const auto rows = compare_models(c, data, worker_count());
  write_text_file(out / "compare.csv", compare_csv(rows));
  std::string errors;
  for (const auto& r : rows)
    if (!r.error.empty()) errors += r.model + ": " + r.error + "\n";
  write_text_file(out / "summary.txt", "models = " + std::to_string(rows.size()) + "\n" + errors);
  std::cout << compare_csv(rows);
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-series forecasting with a Transformer and ARIMA/LSTM/Seq2Seq baselines"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, manifest, loss.csv");
  add_common(train, f);
  train->add_option("--model", f.model, "transformer | lstm | seq2seq | arima");
  train->add_option("--features", f.features, "none | week+diffs | tde:d,tau");
  train->add_option("--epochs", f.epochs, "training epochs");

  auto* evaluate = app.add_subcommand("evaluate", "one-step-ahead metrics for a checkpoint");
  add_common(evaluate, f);
  evaluate->add_option("--checkpoint", f.checkpoint, "checkpoint file or training output directory");
  evaluate->add_option("--model", f.model, "must match the checkpoint");
  evaluate->add_option("--features", f.features, "must match the checkpoint");

  auto* forecast = app.add_subcommand("forecast", "forecast past the end of each series");
  add_common(forecast, f);
  forecast->add_option("--checkpoint", f.checkpoint, "checkpoint file or training output directory");
  forecast->add_option("--steps", f.steps, "weeks ahead");
  forecast->add_option("--region", f.region, "restrict to one region");

  auto* sweep = app.add_subcommand("tde-sweep", "train one transformer per embedding dimension");
  add_common(sweep, f);
  sweep->add_option("--dims", f.dims, "comma-separated dimensions, e.g. 2,4,6,8,16,32");
  sweep->add_option("--epochs", f.epochs, "training epochs");

  auto* compare = app.add_subcommand("compare", "ARIMA, LSTM, Seq2Seq and Transformer on one split");
  add_common(compare, f);
  compare->add_option("--features", f.features, "none | week+diffs | tde:d,tau");
  compare->add_option("--epochs", f.epochs, "training epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(f);
    if (*evaluate) return cmd_evaluate(f);
    if (*forecast) return cmd_forecast(f);
    if (*sweep) return cmd_tde_sweep(f);
    if (*compare) return cmd_compare(f);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return e.kind() == ErrorKind::config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
