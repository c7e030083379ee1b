#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/format.hpp"

namespace tsf {

inline const std::vector<std::string> kModelFamilies{"transformer", "lstm", "seq2seq", "arima"};

/// Every setting a command can consume. Serialized as sorted "key = value"
/// lines; the same text is accepted back.
struct RunConfig {
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string model = "transformer";
  std::string features = "none";
  std::uint64_t seed = 0;

  std::size_t n_in = 10;
  std::size_t horizon = 4;
  bool interpolate_missing = false;
  std::string degenerate = "error";  // error | constant
  CsvSchema columns;

  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::size_t patience = 20;
  double validation_fraction = 0.1;
  std::string loss = "auto";  // auto | mse | huber
  double huber_delta = 1.0;
  std::optional<double> lr;  // fixed rate; unset: schedule (transformer) or 0.02 (baselines)

  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 4;
  std::size_t d_ff = 256;
  double dropout = 0.2;
  std::size_t warmup_steps = 5000;
  bool positional_encoding = true;

  std::vector<std::size_t> lstm_layers{32, 16};
  std::size_t seq2seq_dense = 16;
  std::size_t seq2seq_gru = 32;
  bool teacher_forcing = true;

  std::size_t arima_p = 3;
  std::size_t arima_d = 0;
  std::size_t arima_q = 3;
  bool arima_constant = true;
  std::size_t arima_starts = 8;
  std::size_t arima_max_iterations = 500;

  std::vector<std::size_t> dims{2, 4, 6, 8, 16, 32};
  std::size_t tde_lag = 1;
  std::size_t steps = 4;
  std::string region;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  std::string to_text() const {
    std::string out;
    for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
    return out;
  }

  /// Applies "key = value" lines; '#' starts a comment.
  void apply_text(const std::string& text, const std::string& origin = "config") {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string_view t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos)
        fail(ErrorKind::config, origin + " line " + std::to_string(n) + ": expected key = value");
      set(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
    }
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig c;
    c.apply_text(ss.str(), path);
    return c;
  }

  FeatureSpec feature_spec() const { return FeatureSpec::parse(features); }

  /// Checks that apply to every command.
  void validate() const {
    if (std::find(kModelFamilies.begin(), kModelFamilies.end(), model) == kModelFamilies.end())
      fail(ErrorKind::config, "unknown model '" + model + "' (valid: transformer, lstm, seq2seq, arima)");
    feature_spec();
    if (n_in == 0 || horizon == 0) fail(ErrorKind::config, "n_in and horizon must be >= 1");
    if (batch_size == 0) fail(ErrorKind::config, "batch_size must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      fail(ErrorKind::config, "validation_fraction must be in [0, 1)");
    if (loss != "auto" && loss != "mse" && loss != "huber") fail(ErrorKind::config, "loss must be auto, mse or huber");
    if (!(huber_delta > 0.0)) fail(ErrorKind::config, "huber_delta must be positive");
    if (lr && !(*lr >= 0.0)) fail(ErrorKind::config, "lr must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "dropout must be in [0, 1)");
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || warmup_steps == 0)
      fail(ErrorKind::config, "transformer sizes must be >= 1");
    if (d_model % n_heads != 0) fail(ErrorKind::config, "d_model must be divisible by n_heads");
    if (d_model % 2 != 0) fail(ErrorKind::config, "d_model must be even");
    if (lstm_layers.empty() || std::count(lstm_layers.begin(), lstm_layers.end(), 0u))
      fail(ErrorKind::config, "lstm_layers must be a non-empty list of positive sizes");
    if (seq2seq_dense == 0 || seq2seq_gru == 0) fail(ErrorKind::config, "seq2seq sizes must be >= 1");
    if (arima_starts == 0 || arima_max_iterations == 0) fail(ErrorKind::config, "arima budget must be >= 1");
    if (degenerate != "error" && degenerate != "constant")
      fail(ErrorKind::config, "degenerate must be 'error' or 'constant'");
    if (tde_lag == 0) fail(ErrorKind::config, "tde_lag must be >= 1");
    if (steps == 0) fail(ErrorKind::config, "steps must be >= 1");
  }

  void validate_dims() const {
    if (dims.empty()) fail(ErrorKind::config, "dims must not be empty");
    std::set<std::size_t> seen;
    for (auto d : dims) {
      if (d == 0) fail(ErrorKind::config, "dims must be >= 1");
      if (!seen.insert(d).second) fail(ErrorKind::config, "duplicate dimension " + std::to_string(d) + " in dims");
    }
  }
};

namespace detail {

inline std::size_t config_size(const std::string& key, const std::string& v) {
  const auto n = parse_int(v);
  if (!n || *n < 0) fail(ErrorKind::config, key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*n);
}

inline double config_real(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d) fail(ErrorKind::config, key + ": expected a number, got '" + v + "'");
  return *d;
}

inline bool config_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorKind::config, key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> config_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& f : split_csv_line(v)) out.push_back(config_size(key, std::string(trim(f))));
  return out;
}

inline std::string sizes_str(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct ConfigField {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TSF_FIELD_STR(name) \
  ConfigField { #name, [](RunConfig& c, const std::string& v) { c.name = v; }, [](const RunConfig& c) { return c.name; } }
#define TSF_FIELD_SIZE(name)                                                                     \
  ConfigField {                                                                                  \
    #name, [](RunConfig& c, const std::string& v) { c.name = config_size(#name, v); },         \
        [](const RunConfig& c) { return std::to_string(c.name); }                                \
  }
#define TSF_FIELD_REAL(name)                                                                     \
  ConfigField {                                                                                  \
    #name, [](RunConfig& c, const std::string& v) { c.name = config_real(#name, v); },         \
        [](const RunConfig& c) { return format_double(c.name); }                                 \
  }
#define TSF_FIELD_BOOL(name)                                                                     \
  ConfigField {                                                                                  \
    #name, [](RunConfig& c, const std::string& v) { c.name = config_bool(#name, v); },         \
        [](const RunConfig& c) { return std::string(c.name ? "true" : "false"); }               \
  }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f{
        TSF_FIELD_STR(data),
        TSF_FIELD_STR(out),
        TSF_FIELD_STR(checkpoint),
        TSF_FIELD_STR(model),
        TSF_FIELD_STR(features),
        ConfigField{"seed", [](RunConfig& c, const std::string& v) { c.seed = config_size("seed", v); },
                    [](const RunConfig& c) { return std::to_string(c.seed); }},
        TSF_FIELD_SIZE(n_in),
        TSF_FIELD_SIZE(horizon),
        TSF_FIELD_BOOL(interpolate_missing),
        TSF_FIELD_STR(degenerate),
        ConfigField{"region_column", [](RunConfig& c, const std::string& v) { c.columns.region = v; },
                    [](const RunConfig& c) { return c.columns.region; }},
        ConfigField{"year_column", [](RunConfig& c, const std::string& v) { c.columns.year = v; },
                    [](const RunConfig& c) { return c.columns.year; }},
        ConfigField{"week_column", [](RunConfig& c, const std::string& v) { c.columns.week = v; },
                    [](const RunConfig& c) { return c.columns.week; }},
        ConfigField{"value_column", [](RunConfig& c, const std::string& v) { c.columns.value = v; },
                    [](const RunConfig& c) { return c.columns.value; }},
        TSF_FIELD_SIZE(epochs),
        TSF_FIELD_SIZE(batch_size),
        TSF_FIELD_SIZE(patience),
        TSF_FIELD_REAL(validation_fraction),
        TSF_FIELD_STR(loss),
        TSF_FIELD_REAL(huber_delta),
        ConfigField{"lr",
                    [](RunConfig& c, const std::string& v) {
                      if (v == "auto" || v.empty())
                        c.lr.reset();
                      else
                        c.lr = config_real("lr", v);
                    },
                    [](const RunConfig& c) { return c.lr ? format_double(*c.lr) : std::string("auto"); }},
        TSF_FIELD_SIZE(d_model),
        TSF_FIELD_SIZE(n_heads),
        TSF_FIELD_SIZE(n_layers),
        TSF_FIELD_SIZE(d_ff),
        TSF_FIELD_REAL(dropout),
        TSF_FIELD_SIZE(warmup_steps),
        TSF_FIELD_BOOL(positional_encoding),
        ConfigField{"lstm_layers", [](RunConfig& c, const std::string& v) { c.lstm_layers = config_sizes("lstm_layers", v); },
                    [](const RunConfig& c) { return sizes_str(c.lstm_layers); }},
        TSF_FIELD_SIZE(seq2seq_dense),
        TSF_FIELD_SIZE(seq2seq_gru),
        TSF_FIELD_BOOL(teacher_forcing),
        TSF_FIELD_SIZE(arima_p),
        TSF_FIELD_SIZE(arima_d),
        TSF_FIELD_SIZE(arima_q),
        TSF_FIELD_BOOL(arima_constant),
        TSF_FIELD_SIZE(arima_starts),
        TSF_FIELD_SIZE(arima_max_iterations),
        ConfigField{"dims", [](RunConfig& c, const std::string& v) { c.dims = config_sizes("dims", v); },
                    [](const RunConfig& c) { return sizes_str(c.dims); }},
        TSF_FIELD_SIZE(tde_lag),
        TSF_FIELD_SIZE(steps),
        TSF_FIELD_STR(region),
    };
    std::sort(f.begin(), f.end(), [](const ConfigField& a, const ConfigField& b) { return a.key < b.key; });
    return f;
  }();
  return fields;
}

#undef TSF_FIELD_STR
#undef TSF_FIELD_SIZE
#undef TSF_FIELD_REAL
#undef TSF_FIELD_BOOL

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.set(*this, value);
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

inline std::string RunConfig::get(const std::string& key) const {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.get(*this);
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

inline const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : detail::config_fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

}  // namespace tsf
