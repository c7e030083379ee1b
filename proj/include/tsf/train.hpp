#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <tuple>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/losses.hpp"
#include "tsf/nn.hpp"
#include "tsf/optim.hpp"

namespace tsf {

/// A trainable window-to-horizon model.
template <class M>
concept Forecaster = requires(const M& m, const Sample& s, Rng& r) {
  { m.forward(s, true, r) } -> std::same_as<Tensor>;
  { m.predict_one_step(s) } -> std::convertible_to<double>;
  { m.parameters() } -> std::same_as<ParameterList>;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t patience = 20;  // 0 disables early stopping
  double validation_fraction = 0.1;
  LossKind loss = LossKind::mse;
  double huber_delta = 1.0;
  LearningRate learning_rate;
  AdamConfig adam;
};

struct TrainResult {
  std::vector<double> loss_curve;        // mean training loss per epoch
  std::vector<double> validation_curve;  // empty when early stopping is off
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool stopped_early = false;
};

/// Loss went non-finite; carries the parameters from the last good step.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, ParameterSnapshot last_good, std::size_t epoch)
      : Error(ErrorKind::divergence, what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const ParameterSnapshot& last_good() const { return last_good_; }
  std::size_t epoch() const { return epoch_; }

 private:
  ParameterSnapshot last_good_;
  std::size_t epoch_;
};

inline std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size) {
  return (samples + batch_size - 1) / batch_size;
}

/// Sample indices split into (training, validation): the last `fraction` of
/// each region's windows, which are chronological, is held out.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_tail(const WindowedDataset& ds,
                                                                                   double fraction) {
  std::vector<std::size_t> fit, held;
  std::size_t begin = 0;
  while (begin < ds.size()) {
    std::size_t end = begin;
    while (end < ds.size() && ds.samples[end].region == ds.samples[begin].region) ++end;
    const std::size_t n = end - begin;
    const auto tail = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    for (std::size_t i = begin; i < end; ++i) (i < end - tail ? fit : held).push_back(i);
    begin = end;
  }
  return {fit, held};
}

namespace detail {

inline constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
inline constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

}  // namespace detail

/// Minibatch Adam training with a seeded shuffle each epoch. Deterministic
/// for a fixed seed: shuffles and per-sample dropout draw from streams split
/// off the seed by (epoch, sample index).
template <Forecaster M>
TrainResult train(M& model, const WindowedDataset& ds, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
  if (ds.empty()) fail(ErrorKind::length, "train: empty dataset");
  if (cfg.batch_size == 0) fail(ErrorKind::config, "train: batch size must be positive");
  ParameterList params = model.parameters();
  Adam adam(cfg.adam);
  TrainResult result;

  std::vector<std::size_t> fit(ds.size()), held;
  std::iota(fit.begin(), fit.end(), std::size_t{0});
  if (cfg.patience > 0 && cfg.validation_fraction > 0.0) {
    std::tie(fit, held) = holdout_tail(ds, cfg.validation_fraction);
    if (fit.empty()) fail(ErrorKind::length, "train: validation holdout leaves no training samples");
  }

  const Rng root(cfg.seed);
  const Rng shuffle_root = root.split(detail::kShuffleStream);
  const Rng dropout_root = root.split(detail::kDropoutStream);
  ParameterSnapshot last_good = snapshot(params);
  ParameterSnapshot best = last_good;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = fit;
    Rng shuffler = shuffle_root.split(epoch);
    shuffler.shuffle(order);
    const Rng epoch_dropout = dropout_root.split(epoch);
    double epoch_total = 0.0;

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      zero_grads(params);
      try {
        Tensor total;
        for (std::size_t k = b; k < e; ++k) {
          const Sample& s = ds.samples[order[k]];
          Rng r = epoch_dropout.split(order[k]);
          Tensor l = compute_loss(cfg.loss, model.forward(s, true, r), s.targets, cfg.huber_delta);
          epoch_total += l.item();
          total = total.defined() ? add(total, l) : l;
        }
        backward(scale(total, 1.0 / static_cast<double>(e - b)));
        ++result.steps;
        adam.step(params, cfg.learning_rate.at(result.steps));
        for (const auto& p : params)
          for (double v : p.tensor.data())
            if (!std::isfinite(v)) fail(ErrorKind::numeric, "parameter '" + p.name + "' became non-finite");
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::numeric) throw;
        restore(params, last_good);
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": " + err.what(), last_good,
                               epoch);
      }
      last_good = snapshot(params);
    }
    result.loss_curve.push_back(epoch_total / static_cast<double>(order.size()));
    result.epochs_run = epoch;

    double val = std::numeric_limits<double>::quiet_NaN();
    if (!held.empty()) {
      NoGradGuard no_grad;
      Rng unused(0);
      double total = 0.0;
      for (std::size_t i : held) {
        const Sample& s = ds.samples[i];
        total += compute_loss(cfg.loss, model.forward(s, false, unused), s.targets, cfg.huber_delta).item();
      }
      val = total / static_cast<double>(held.size());
      result.validation_curve.push_back(val);
      if (val < best_val) {
        best_val = val;
        best = last_good;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        result.stopped_early = true;
      }
    } else {
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(epoch, result.loss_curve.back(), val);
    if (result.stopped_early) break;
  }
  if (!held.empty() && result.best_epoch > 0) restore(params, best);
  return result;
}

}  // namespace tsf
