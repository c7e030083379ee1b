#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tsf/format.hpp"
#include "tsf/metrics.hpp"
#include "tsf/parallel.hpp"
#include "tsf/pipeline.hpp"

namespace tsf {

struct RegionMetrics {
  std::string region;
  double pearson = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  double rmse = 0.0;
  std::size_t n = 0;
};

struct PredictionRow {
  std::string region;
  int year = 0;
  int week = 0;
  double actual = 0.0;
  double predicted = 0.0;
};

/// One-step-ahead metrics in original units.
struct EvalReport {
  std::vector<RegionMetrics> regions;
  std::vector<PredictionRow> predictions;
  double mean_pearson = std::numeric_limits<double>::quiet_NaN();
  double mean_rmse = std::numeric_limits<double>::quiet_NaN();
  std::size_t pearson_undefined = 0;  // regions left out of mean_pearson

  std::string metrics_csv() const {
    std::ostringstream o;
    o << "region,pearson,rmse,n\n";
    for (const auto& r : regions)
      o << csv_field(r.region) << ',' << format_double(r.pearson) << ',' << format_double(r.rmse) << ',' << r.n << '\n';
    return o.str();
  }

  std::string predictions_csv() const {
    std::ostringstream o;
    o << "region,year,week,actual,predicted\n";
    for (const auto& p : predictions)
      o << csv_field(p.region) << ',' << p.year << ',' << p.week << ',' << format_double(p.actual) << ','
        << format_double(p.predicted) << '\n';
    return o.str();
  }

  std::string summary() const {
    std::ostringstream o;
    o << "regions = " << regions.size() << "\n";
    o << "points = " << predictions.size() << "\n";
    o << "mean_pearson = " << format_double(mean_pearson) << "\n";
    o << "mean_rmse = " << format_double(mean_rmse) << "\n";
    o << "pearson_undefined_regions = " << pearson_undefined << "\n";
    return o.str();
  }

  static std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  }
};

/// Builds the report from first-step predictions (scaled units) aligned with
/// data.test.samples.
inline EvalReport evaluate_predictions(const PreparedData& data, const std::vector<double>& scaled_predictions) {
  if (data.test.empty()) fail(ErrorKind::length, "evaluate: test set is empty");
  if (scaled_predictions.size() != data.test.size())
    fail(ErrorKind::dimension, "evaluate: " + std::to_string(scaled_predictions.size()) + " predictions for " +
                                   std::to_string(data.test.size()) + " test windows");
  EvalReport report;
  const auto& scaler = data.target_scaler();
  for (const auto& rd : data.regions) {
    std::vector<double> actual, predicted;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const Sample& s = data.test.samples[i];
      if (s.region != rd.region) continue;
      const double a = rd.raw[s.first_target];
      const double p = scaler.invert(scaled_predictions[i]);
      actual.push_back(a);
      predicted.push_back(p);
      report.predictions.push_back({rd.region, rd.years[s.first_target], rd.weeks[s.first_target], a, p});
    }
    if (actual.empty()) continue;
    RegionMetrics m;
    m.region = rd.region;
    m.n = actual.size();
    m.rmse = rmse(actual, predicted);
    try {
      m.pearson = pearson(actual, predicted);
    } catch (const Error&) {
      m.pearson = std::numeric_limits<double>::quiet_NaN();
    }
    report.regions.push_back(m);
  }
  double sp = 0.0, sr = 0.0;
  std::size_t np = 0;
  for (const auto& r : report.regions) {
    sr += r.rmse;
    if (std::isnan(r.pearson)) {
      ++report.pearson_undefined;
    } else {
      sp += r.pearson;
      ++np;
    }
  }
  report.mean_rmse = sr / static_cast<double>(report.regions.size());
  if (np > 0) report.mean_pearson = sp / static_cast<double>(np);
  return report;
}

/// First-step predictions for every test window, fanned out over `workers`
/// threads. `predict` must be safe to call concurrently (read-only model).
inline std::vector<double> predict_test_set(const PreparedData& data,
                                            const std::function<double(const Sample&)>& predict,
                                            std::size_t workers = 1) {
  std::vector<double> out(data.test.size());
  parallel_for(data.test.size(), workers, [&](std::size_t i) { out[i] = predict(data.test.samples[i]); });
  return out;
}

inline EvalReport evaluate_one_step(const PreparedData& data, const std::function<double(const Sample&)>& predict,
                                    std::size_t workers = 1) {
  if (data.test.empty()) fail(ErrorKind::length, "evaluate: test set is empty");
  return evaluate_predictions(data, predict_test_set(data, predict, workers));
}

inline std::string loss_csv(const std::vector<double>& curve) {
  std::ostringstream o;
  o << "epoch,loss\n";
  for (std::size_t e = 0; e < curve.size(); ++e) o << e + 1 << ',' << format_double(curve[e]) << '\n';
  return o.str();
}

}  // namespace tsf
