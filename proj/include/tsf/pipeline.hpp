#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsf/data.hpp"

namespace tsf {

struct PipelineOptions {
  std::size_t n_in = 10;
  std::size_t horizon = 4;
  FeatureSpec features;
  DegeneratePolicy degenerate = DegeneratePolicy::error;
  bool interpolate_missing = false;
};

/// One region after feature construction and scaling.
struct RegionData {
  std::string region;
  std::vector<int> years;    // per source position
  std::vector<int> weeks;    // per source position
  std::vector<double> raw;   // raw target values per source position
  FeatureFrame raw_frame;    // unscaled features
  FeatureFrame scaled_frame;
  std::size_t train_len = 0;   // source positions [0, train_len) are training data
  std::size_t train_rows = 0;  // frame rows whose source position < train_len
};

struct DroppedRegion {
  std::string region;
  std::string reason;
};

struct PreparedData {
  PipelineOptions options;
  std::vector<std::string> feature_names;
  std::vector<ScalerParams> scalers;  // one per feature, fitted on every region's training rows
  std::vector<RegionData> regions;
  std::vector<DroppedRegion> dropped;
  WindowedDataset train;
  WindowedDataset test;

  const ScalerParams& target_scaler() const { return scalers.at(0); }

  const RegionData* find_region(const std::string& name) const {
    for (const auto& r : regions)
      if (r.region == name) return &r;
    return nullptr;
  }

  /// Scales a raw feature row with the training scalers.
  std::vector<double> scale_row(std::span<const double> raw_row) const {
    std::vector<double> out(raw_row.size());
    for (std::size_t j = 0; j < raw_row.size(); ++j) out[j] = scalers[j].apply(raw_row[j]);
    return out;
  }

  std::string manifest() const;
};

/// Runs ingestion output through gap handling, the 2:1 split, feature
/// construction, min-max scaling and windowing. Test windows may take their
/// inputs from the tail of the training segment; their targets never precede
/// the split point. Passing `fixed_scalers` reuses scalers from a checkpoint.
inline PreparedData prepare_data(const std::vector<RawSeries>& input, const PipelineOptions& opt,
                                 const std::vector<ScalerParams>* fixed_scalers = nullptr) {
  PreparedData out;
  out.options = opt;
  out.feature_names = opt.features.names();
  const std::size_t arity = out.feature_names.size();

  for (const auto& original : input) {
    RawSeries series = original;
    const auto gaps = find_gaps(series);
    if (!gaps.empty()) {
      if (!opt.interpolate_missing) {
        const auto& g = gaps.front();
        fail(ErrorKind::validation, "region '" + series.region + "' is missing weeks between " +
                                        std::to_string(g.from_year) + "-W" + std::to_string(g.from_week) + " and " +
                                        std::to_string(g.to_year) + "-W" + std::to_string(g.to_week) + " (" +
                                        std::to_string(gaps.size()) + " gap(s); enable interpolation to fill)");
      }
      series = interpolate_gaps(series);
    }
    const std::size_t n = series.size();
    if (n < 3) {
      out.dropped.push_back({series.region, "only " + std::to_string(n) + " points"});
      continue;
    }
    RegionData rd;
    rd.region = series.region;
    rd.raw = series.values();
    rd.weeks = series.weeks();
    for (const auto& p : series.points) rd.years.push_back(p.year);
    rd.train_len = split_train_test(n).train;
    if (n <= opt.features.leading_rows() || (opt.features.kind == FeatureSpec::Kind::tde &&
                                             opt.features.tde.dimension * opt.features.tde.lag > n)) {
      out.dropped.push_back({series.region, "too short for feature spec " + opt.features.str()});
      continue;
    }
    rd.raw_frame = build_frame(opt.features, rd.raw, rd.weeks);
    while (rd.train_rows < rd.raw_frame.rows() && rd.raw_frame.time_index[rd.train_rows] < rd.train_len)
      ++rd.train_rows;
    const std::size_t test_rows = rd.raw_frame.rows() - rd.train_rows;
    if (rd.train_rows < opt.n_in + opt.horizon) {
      out.dropped.push_back({series.region, std::to_string(rd.train_rows) + " training rows, need n_in + M = " +
                                                std::to_string(opt.n_in + opt.horizon)});
      continue;
    }
    if (test_rows < opt.horizon) {
      out.dropped.push_back({series.region, std::to_string(test_rows) + " test rows, need M = " +
                                                std::to_string(opt.horizon)});
      continue;
    }
    out.regions.push_back(std::move(rd));
  }

  if (fixed_scalers) {
    if (fixed_scalers->size() != arity)
      fail(ErrorKind::schema, "checkpoint has " + std::to_string(fixed_scalers->size()) +
                                  " feature scalers, feature spec needs " + std::to_string(arity));
    out.scalers = *fixed_scalers;
  } else {
    for (std::size_t j = 0; j < arity; ++j) {
      std::vector<double> column;
      for (const auto& rd : out.regions)
        for (std::size_t r = 0; r < rd.train_rows; ++r) column.push_back(rd.raw_frame.at(r, j));
      if (column.empty()) fail(ErrorKind::length, "no region has enough data for training");
      try {
        out.scalers.push_back(fit_scaler(column, opt.degenerate));
      } catch (const Error& e) {
        fail(e.kind(), "feature '" + out.feature_names[j] + "': " + e.what());
      }
    }
  }

  std::vector<WindowedDataset> train_parts, test_parts;
  for (auto& rd : out.regions) {
    rd.scaled_frame = rd.raw_frame;
    for (std::size_t r = 0; r < rd.scaled_frame.rows(); ++r)
      for (std::size_t j = 0; j < arity; ++j)
        rd.scaled_frame.values[r * arity + j] = out.scalers[j].apply(rd.raw_frame.at(r, j));
    train_parts.push_back(make_windows(rd.scaled_frame, opt.n_in, opt.horizon, rd.region, 0, rd.train_rows));
    test_parts.push_back(make_windows(rd.scaled_frame, opt.n_in, opt.horizon, rd.region, rd.train_rows - opt.n_in,
                                      rd.scaled_frame.rows()));
  }
  out.train = concat_regions(train_parts);
  out.test = concat_regions(test_parts);
  if (out.train.empty()) {
    out.train = {opt.n_in, opt.horizon, out.feature_names, {}};
    out.test = out.train;
  }
  return out;
}

inline std::string PreparedData::manifest() const {
  std::ostringstream os;
  os << "features = " << options.features.str() << "\n";
  os << "feature_names = ";
  for (std::size_t j = 0; j < feature_names.size(); ++j) os << (j ? "," : "") << feature_names[j];
  os << "\n";
  os << "scaling = min-max per feature, fitted on training rows of all kept regions\n";
  for (std::size_t j = 0; j < scalers.size(); ++j) {
    os << "scaler." << feature_names[j] << ".min = " << format_double(scalers[j].min) << "\n";
    os << "scaler." << feature_names[j] << ".max = " << format_double(scalers[j].max) << "\n";
    if (scalers[j].constant) os << "scaler." << feature_names[j] << ".degenerate = constant 0.5\n";
  }
  os << "n_in = " << options.n_in << "\n";
  os << "horizon = " << options.horizon << "\n";
  os << "split = 2:1 chronological per region\n";
  os << "missing_weeks = " << (options.interpolate_missing ? "interpolate" : "error") << "\n";
  os << "regions_kept = " << regions.size() << "\n";
  os << "regions_dropped = " << dropped.size() << "\n";
  for (const auto& rd : regions) {
    std::size_t n_train = 0, n_test = 0;
    for (const auto& s : train.samples) n_train += s.region == rd.region;
    for (const auto& s : test.samples) n_test += s.region == rd.region;
    os << "region." << rd.region << ".points = " << rd.raw.size() << "\n";
    os << "region." << rd.region << ".train_points = " << rd.train_len << "\n";
    os << "region." << rd.region << ".train_windows = " << n_train << "\n";
    os << "region." << rd.region << ".test_windows = " << n_test << "\n";
  }
  for (const auto& d : dropped) os << "dropped." << d.region << " = " << d.reason << "\n";
  os << "windows.train = " << train.size() << "\n";
  os << "windows.test = " << test.size() << "\n";
  return os.str();
}

}  // namespace tsf
