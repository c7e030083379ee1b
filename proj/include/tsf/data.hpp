#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "tsf/error.hpp"
#include "tsf/format.hpp"

namespace tsf {

// ------------------------------------------------------------------ raw data

struct WeekPoint {
  int year = 0;
  int week = 0;  // epidemiological week, 1..53
  double value = 0.0;
};

/// One region's weekly observations, strictly increasing in (year, week).
struct RawSeries {
  std::string region;
  std::vector<WeekPoint> points;

  std::size_t size() const { return points.size(); }
  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(points.size());
    for (const auto& p : points) v.push_back(p.value);
    return v;
  }
  std::vector<int> weeks() const {
    std::vector<int> w;
    w.reserve(points.size());
    for (const auto& p : points) w.push_back(p.week);
    return w;
  }
};

struct CsvSchema {
  std::string region = "region";
  std::string year = "year";
  std::string week = "week";
  std::string value = "value";
};

/// Missing weeks between two consecutive observations of a region.
struct Gap {
  std::string region;
  int from_year, from_week;  // last observed before the gap
  int to_year, to_week;      // first observed after it
};

struct IngestResult {
  std::vector<RawSeries> series;  // in order of first appearance
  std::vector<Gap> gaps;
};

/// True when (y2, w2) is the epi week right after (y1, w1). A year may end at
/// week 52 or 53; without calendar arithmetic both are accepted.
inline bool consecutive_weeks(int y1, int w1, int y2, int w2) {
  if (y2 == y1) return w2 == w1 + 1;
  return y2 == y1 + 1 && w2 == 1 && (w1 == 52 || w1 == 53);
}

/// The epi week following (year, week), assuming 52-week years.
inline std::pair<int, int> next_week(int year, int week) {
  if (week >= 52) return {year + 1, 1};
  return {year, week + 1};
}

inline std::vector<Gap> find_gaps(const RawSeries& s) {
  std::vector<Gap> gaps;
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    const auto& a = s.points[i - 1];
    const auto& b = s.points[i];
    if (!consecutive_weeks(a.year, a.week, b.year, b.week))
      gaps.push_back({s.region, a.year, a.week, b.year, b.week});
  }
  return gaps;
}

/// Fills missing weeks by linear interpolation between the neighbours.
inline RawSeries interpolate_gaps(const RawSeries& s) {
  RawSeries out{s.region, {}};
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (i > 0) {
      const auto& a = s.points[i - 1];
      const auto& b = s.points[i];
      std::vector<std::pair<int, int>> missing;
      auto [y, w] = next_week(a.year, a.week);
      // week 53 only appears if the data itself contains it
      if (b.year == a.year && b.week > a.week + 1) {
        for (int k = a.week + 1; k < b.week; ++k) missing.emplace_back(a.year, k);
      } else if (!consecutive_weeks(a.year, a.week, b.year, b.week)) {
        while (std::tie(y, w) < std::tie(b.year, b.week)) {
          missing.emplace_back(y, w);
          std::tie(y, w) = next_week(y, w);
        }
      }
      const double steps = static_cast<double>(missing.size() + 1);
      for (std::size_t k = 0; k < missing.size(); ++k) {
        const double frac = static_cast<double>(k + 1) / steps;
        out.points.push_back({missing[k].first, missing[k].second, a.value + frac * (b.value - a.value)});
      }
    }
    out.points.push_back(s.points[i]);
  }
  return out;
}

/// Reads `region,year,week,value` rows (column names per schema, any order).
inline IngestResult ingest_csv(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) fail(ErrorKind::schema, "empty CSV: missing header");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::schema, "CSV header lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_region = column(schema.region), c_year = column(schema.year), c_week = column(schema.week),
                    c_value = column(schema.value);
  const std::size_t needed = std::max({c_region, c_year, c_week, c_value}) + 1;

  IngestResult result;
  std::unordered_map<std::string, std::size_t> index;
  std::map<std::tuple<std::string, int, int>, std::size_t> seen;  // key -> first line
  std::vector<std::string> duplicates;

  auto row_error = [&](const std::string& what) {
    fail(ErrorKind::row, "line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < needed) row_error("expected at least " + std::to_string(needed) + " fields");
    const auto year = parse_int(f[c_year]);
    if (!year) row_error("non-numeric year '" + f[c_year] + "'");
    const auto week = parse_int(f[c_week]);
    if (!week) row_error("non-numeric week '" + f[c_week] + "'");
    if (*week < 1 || *week > 53) row_error("week " + std::to_string(*week) + " out of range 1..53");
    const auto value = parse_double(f[c_value]);
    if (!value || !std::isfinite(*value)) row_error("non-numeric value '" + f[c_value] + "'");
    if (*value < 0.0) row_error("negative value " + f[c_value]);
    const std::string& region = f[c_region];
    if (region.empty()) row_error("empty region");

    auto key = std::make_tuple(region, static_cast<int>(*year), static_cast<int>(*week));
    if (auto [it, inserted] = seen.emplace(key, line_no); !inserted) {
      duplicates.push_back(region + "," + std::to_string(*year) + "," + std::to_string(*week) + " (lines " +
                           std::to_string(it->second) + " and " + std::to_string(line_no) + ")");
      continue;
    }
    auto [it, fresh] = index.emplace(region, result.series.size());
    if (fresh) result.series.push_back({region, {}});
    result.series[it->second].points.push_back({static_cast<int>(*year), static_cast<int>(*week), *value});
  }
  if (!duplicates.empty()) {
    std::string msg = "duplicate (region,year,week) keys:";
    for (const auto& d : duplicates) msg += " " + d + ";";
    fail(ErrorKind::validation, msg);
  }
  for (auto& s : result.series) {
    std::sort(s.points.begin(), s.points.end(),
              [](const auto& a, const auto& b) { return std::tie(a.year, a.week) < std::tie(b.year, b.week); });
    for (auto& g : find_gaps(s)) result.gaps.push_back(g);
  }
  return result;
}

inline IngestResult ingest_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open data file '" + path + "'");
  return ingest_csv(in, schema);
}

// ---------------------------------------------------------------- split/scale

struct TrainTestSplit {
  std::size_t train = 0;
  std::size_t test = 0;
};

/// Chronological 2:1 split: the first floor(2n/3) points train.
inline TrainTestSplit split_train_test(std::size_t n) {
  if (n < 3) fail(ErrorKind::length, "series of length " + std::to_string(n) + " is too short to split (need >= 3)");
  const std::size_t train = 2 * n / 3;
  return {train, n - train};
}

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(std::span<const T> series) {
  const auto s = split_train_test(series.size());
  return {std::vector<T>(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(s.train)),
          std::vector<T>(series.begin() + static_cast<std::ptrdiff_t>(s.train), series.end())};
}

enum class DegeneratePolicy { error, constant_half };

/// Min-max scaler fitted on training values only. Test values may leave [0, 1].
struct ScalerParams {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;  // degenerate range mapped to 0.5

  double apply(double v) const { return constant ? 0.5 : (v - min) / (max - min); }
  double invert(double s) const { return constant ? min : min + s * (max - min); }
};

inline ScalerParams fit_scaler(std::span<const double> train, DegeneratePolicy policy = DegeneratePolicy::error) {
  if (train.empty()) fail(ErrorKind::length, "fit_scaler: no training values");
  const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
  if (*hi == *lo) {
    if (policy == DegeneratePolicy::error)
      fail(ErrorKind::degenerate, "fit_scaler: training values are constant (" + format_double(*lo) +
                                      "); min-max scaling is undefined");
    return {*lo, *hi, true};
  }
  return {*lo, *hi, false};
}

inline std::vector<double> apply_scaler(const ScalerParams& p, std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = p.apply(v[i]);
  return out;
}

inline std::vector<double> invert_scaler(const ScalerParams& p, std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = p.invert(v[i]);
  return out;
}

// ------------------------------------------------------------------- features

struct TdeConfig {
  std::size_t dimension = 1;
  std::size_t lag = 1;
};

/// Per-timestep multivariate frame. Column 0 is always the forecast target.
struct FeatureFrame {
  std::vector<std::string> names;
  std::vector<double> values;            // rows x arity, row-major
  std::vector<std::size_t> time_index;   // source position of each row

  std::size_t arity() const { return names.size(); }
  std::size_t rows() const { return time_index.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * arity() + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * arity(), arity()}; }
};

inline constexpr double kWeeksPerYearScale = 53.0;

/// Feature layout for a run: the raw value alone, value + week number + first
/// and second differences, or a time-delay embedding of the value.
struct FeatureSpec {
  enum class Kind { univariate, week_diffs, tde };
  Kind kind = Kind::univariate;
  TdeConfig tde;

  static FeatureSpec univariate() { return {}; }
  static FeatureSpec week_diffs() { return {Kind::week_diffs, {}}; }
  static FeatureSpec embedding(std::size_t d, std::size_t lag = 1) { return {Kind::tde, {d, lag}}; }

  static FeatureSpec parse(std::string_view text) {
    text = trim(text);
    if (text == "none" || text == "univariate") return univariate();
    if (text == "week+diffs") return week_diffs();
    if (text.substr(0, 4) == "tde:") {
      auto body = text.substr(4);
      const auto comma = body.find(',');
      const auto d = parse_int(body.substr(0, comma));
      const auto lag = comma == std::string_view::npos ? std::optional<long long>(1) : parse_int(body.substr(comma + 1));
      if (!d || !lag || *d < 1 || *lag < 1)
        fail(ErrorKind::config, "feature spec '" + std::string(text) + "': expected tde:d,tau with d, tau >= 1");
      return embedding(static_cast<std::size_t>(*d), static_cast<std::size_t>(*lag));
    }
    fail(ErrorKind::config, "unknown feature spec '" + std::string(text) + "' (none | week+diffs | tde:d,tau)");
  }

  std::string str() const {
    switch (kind) {
      case Kind::univariate: return "none";
      case Kind::week_diffs: return "week+diffs";
      case Kind::tde: return "tde:" + std::to_string(tde.dimension) + "," + std::to_string(tde.lag);
    }
    return "none";
  }

  std::vector<std::string> names() const {
    switch (kind) {
      case Kind::univariate: return {"value"};
      case Kind::week_diffs: return {"value", "week", "diff1", "diff2"};
      case Kind::tde: {
        std::vector<std::string> n{"value"};
        for (std::size_t j = 1; j < tde.dimension; ++j) n.push_back("lag" + std::to_string(j * tde.lag));
        return n;
      }
    }
    return {"value"};
  }

  std::size_t arity() const { return names().size(); }

  /// Leading timesteps whose features are undefined and therefore dropped.
  std::size_t leading_rows() const {
    switch (kind) {
      case Kind::univariate: return 0;
      case Kind::week_diffs: return 2;
      case Kind::tde: return (tde.dimension - 1) * tde.lag;
    }
    return 0;
  }

  /// Feature vector at the last position of `history` (raw units).
  std::vector<double> row(std::span<const double> history, int week) const {
    const std::size_t t = history.size() - 1;
    if (history.size() <= leading_rows())
      fail(ErrorKind::length, "feature row needs at least " + std::to_string(leading_rows() + 1) + " values");
    switch (kind) {
      case Kind::univariate: return {history[t]};
      case Kind::week_diffs: {
        const double d1 = history[t] - history[t - 1];
        const double d1_prev = history[t - 1] - history[t - 2];
        return {history[t], static_cast<double>(week) / kWeeksPerYearScale, d1, d1 - d1_prev};
      }
      case Kind::tde: {
        std::vector<double> r(tde.dimension);
        for (std::size_t j = 0; j < tde.dimension; ++j) r[j] = history[t - j * tde.lag];
        return r;
      }
    }
    return {};
  }
};

/// [value, week/53, first difference, second difference] per timestep;
/// the first two timesteps (undefined second difference) are dropped.
inline FeatureFrame make_features(std::span<const double> values, std::span<const int> weeks) {
  if (values.size() != weeks.size()) fail(ErrorKind::dimension, "make_features: values and weeks differ in length");
  if (values.size() < 3)
    fail(ErrorKind::length, "make_features: differences need at least 3 values, got " + std::to_string(values.size()));
  const auto spec = FeatureSpec::week_diffs();
  FeatureFrame f{spec.names(), {}, {}};
  for (std::size_t t = 2; t < values.size(); ++t) {
    const auto r = spec.row(values.subspan(0, t + 1), weeks[t]);
    f.values.insert(f.values.end(), r.begin(), r.end());
    f.time_index.push_back(t);
  }
  return f;
}

/// Time-delay embedding: row at t is (x_t, x_{t-lag}, ..., x_{t-(d-1)lag}).
inline FeatureFrame make_tde(std::span<const double> values, const TdeConfig& cfg) {
  if (cfg.dimension < 1 || cfg.lag < 1) fail(ErrorKind::parameter, "make_tde: dimension and lag must be >= 1");
  if (cfg.dimension * cfg.lag > values.size())
    fail(ErrorKind::length, "make_tde: d*tau = " + std::to_string(cfg.dimension * cfg.lag) +
                                " exceeds series length " + std::to_string(values.size()));
  const auto spec = FeatureSpec::embedding(cfg.dimension, cfg.lag);
  FeatureFrame f{spec.names(), {}, {}};
  for (std::size_t t = spec.leading_rows(); t < values.size(); ++t) {
    for (std::size_t j = 0; j < cfg.dimension; ++j) f.values.push_back(values[t - j * cfg.lag]);
    f.time_index.push_back(t);
  }
  return f;
}

inline FeatureFrame univariate_frame(std::span<const double> values) {
  FeatureFrame f{{"value"}, std::vector<double>(values.begin(), values.end()), {}};
  for (std::size_t t = 0; t < values.size(); ++t) f.time_index.push_back(t);
  return f;
}

inline FeatureFrame build_frame(const FeatureSpec& spec, std::span<const double> values, std::span<const int> weeks) {
  switch (spec.kind) {
    case FeatureSpec::Kind::univariate: return univariate_frame(values);
    case FeatureSpec::Kind::week_diffs: return make_features(values, weeks);
    case FeatureSpec::Kind::tde: return make_tde(values, spec.tde);
  }
  return univariate_frame(values);
}

// -------------------------------------------------------------------- windows

/// One supervised pair. `inputs` covers n_in frame rows; `targets` are the
/// next M target values and `target_features` the full rows at those steps
/// (the transformer decoder and autoregressive inference consume them).
struct Sample {
  std::vector<double> inputs;           // n_in x arity
  std::vector<double> targets;          // M
  std::vector<double> target_features;  // M x arity
  std::string region;
  std::size_t first_input = 0;   // source position of inputs[0]
  std::size_t first_target = 0;  // source position of targets[0]
};

struct WindowedDataset {
  std::size_t n_in = 0;
  std::size_t horizon = 0;
  std::vector<std::string> feature_names;
  std::vector<Sample> samples;

  std::size_t arity() const { return feature_names.size(); }
  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Stride-1 windows over frame rows [row_begin, row_end): X = rows [i, i+n_in),
/// Y = column 0 of rows [i+n_in, i+n_in+M).
inline WindowedDataset make_windows(const FeatureFrame& frame, std::size_t n_in, std::size_t horizon,
                                    const std::string& region = {}, std::size_t row_begin = 0,
                                    std::size_t row_end = static_cast<std::size_t>(-1)) {
  if (n_in == 0 || horizon == 0) fail(ErrorKind::parameter, "make_windows: n_in and horizon must be >= 1");
  row_end = std::min(row_end, frame.rows());
  const std::size_t len = row_end > row_begin ? row_end - row_begin : 0;
  if (len < n_in + horizon)
    fail(ErrorKind::length, "make_windows: " + std::to_string(len) + " rows available, need at least n_in + M = " +
                                std::to_string(n_in + horizon));
  const std::size_t a = frame.arity();
  WindowedDataset ds{n_in, horizon, frame.names, {}};
  const std::size_t count = len - (n_in + horizon) + 1;
  ds.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = row_begin + k;
    Sample s;
    s.region = region;
    s.inputs.assign(frame.values.begin() + static_cast<std::ptrdiff_t>(i * a),
                    frame.values.begin() + static_cast<std::ptrdiff_t>((i + n_in) * a));
    s.target_features.assign(frame.values.begin() + static_cast<std::ptrdiff_t>((i + n_in) * a),
                             frame.values.begin() + static_cast<std::ptrdiff_t>((i + n_in + horizon) * a));
    for (std::size_t m = 0; m < horizon; ++m) s.targets.push_back(frame.at(i + n_in + m, 0));
    s.first_input = frame.time_index[i];
    s.first_target = frame.time_index[i + n_in];
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline WindowedDataset make_windows(std::span<const double> series, std::size_t n_in, std::size_t horizon) {
  return make_windows(univariate_frame(series), n_in, horizon);
}

/// Concatenates per-region datasets into the global training set. Samples keep
/// their region tags; windows never straddle regions since each was built alone.
inline WindowedDataset concat_regions(const std::vector<WindowedDataset>& parts) {
  WindowedDataset out;
  if (parts.empty()) return out;
  out.n_in = parts[0].n_in;
  out.horizon = parts[0].horizon;
  out.feature_names = parts[0].feature_names;
  for (const auto& p : parts) {
    if (p.n_in != out.n_in || p.horizon != out.horizon || p.arity() != out.arity())
      fail(ErrorKind::schema, "concat_regions: layout (n_in=" + std::to_string(p.n_in) + ", M=" +
                                  std::to_string(p.horizon) + ", arity=" + std::to_string(p.arity()) +
                                  ") differs from (n_in=" + std::to_string(out.n_in) + ", M=" +
                                  std::to_string(out.horizon) + ", arity=" + std::to_string(out.arity()) + ")");
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  return out;
}

}  // namespace tsf
