#pragma once

#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/nn.hpp"

namespace tsf {

struct LstmConfig {
  std::vector<std::size_t> layer_sizes{32, 16};
  std::size_t n_in = 10;
  std::size_t horizon = 4;
  std::size_t feature_arity = 1;
  double dropout = 0.2;
  double learning_rate = 0.02;

  void validate() const {
    if (layer_sizes.empty()) fail(ErrorKind::config, "lstm: need at least one layer");
    for (auto s : layer_sizes)
      if (s == 0) fail(ErrorKind::config, "lstm: layer sizes must be positive");
    if (n_in == 0 || horizon == 0 || feature_arity == 0) fail(ErrorKind::config, "lstm: window sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "lstm: dropout must be in [0, 1)");
  }
};

/// Fused gate weights: W maps [h_prev, x] to the four pre-activations in the
/// order forget, input, candidate, output.
struct LstmCellParams {
  Tensor weight;  // (H + X) x 4H
  Tensor bias;    // 4H

  LstmCellParams() = default;
  LstmCellParams(std::size_t input, std::size_t hidden, Rng& rng)
      : weight(xavier_uniform(hidden + input, 4 * hidden, rng)), bias(Tensor::zeros({4 * hidden}, true)) {
    // forget gate starts open
    auto b = bias.mutable_data();
    for (std::size_t j = 0; j < hidden; ++j) b[j] = 1.0;
  }

  std::size_t hidden() const { return weight.dim(1) / 4; }
  std::size_t input() const { return weight.dim(0) - hidden(); }

  void collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

struct LstmStep {
  Tensor h;  // hidden state [1 x H]
  Tensor c;  // cell state [1 x H]
  Tensor y;  // output gate [1 x H]
};

/// f = s(W_f[h,x] + b_f), i = s(W_i[h,x] + b_i), C~ = tanh(W_C[h,x] + b_C),
/// C = f*C_prev + i*C~, y = s(W_y[h,x] + b_y), h = y*tanh(C).
inline LstmStep lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev, const LstmCellParams& p) {
  const std::size_t H = p.hidden(), X = p.input();
  auto row_of = [](const Tensor& t, std::size_t n) {
    return t.rank() == 2 && t.dim(0) == 1 && t.dim(1) == n;
  };
  if (!row_of(x, X) || !row_of(h_prev, H) || !row_of(c_prev, H))
    fail(ErrorKind::dimension, "lstm_cell: x " + shape_str(x.shape()) + ", h " + shape_str(h_prev.shape()) + ", C " +
                                   shape_str(c_prev.shape()) + " vs input " + std::to_string(X) + ", hidden " +
                                   std::to_string(H));
  const Tensor z = add_bias(matmul(concat_cols({h_prev, x}), p.weight), p.bias);
  const Tensor f = sigmoid(slice_cols(z, 0, H));
  const Tensor i = sigmoid(slice_cols(z, H, H));
  const Tensor cand = tanh(slice_cols(z, 2 * H, H));
  const Tensor y = sigmoid(slice_cols(z, 3 * H, H));
  Tensor c = add(mul(f, c_prev), mul(i, cand));
  Tensor h = mul(y, tanh(c));
  return {h, c, y};
}

/// Runs a cell over rows of `seq` from zero state; returns every hidden state.
inline std::vector<Tensor> lstm_sequence(const std::vector<Tensor>& seq, const LstmCellParams& p) {
  Tensor h = Tensor::zeros({1, p.hidden()}), c = Tensor::zeros({1, p.hidden()});
  std::vector<Tensor> out;
  out.reserve(seq.size());
  for (const auto& x : seq) {
    auto step = lstm_cell(x, h, c, p);
    h = step.h;
    c = step.c;
    out.push_back(h);
  }
  return out;
}

/// Stacked LSTM layers followed by a dense head emitting all M steps at once.
class LstmForecaster {
 public:
  LstmForecaster() = default;

  LstmForecaster(const LstmConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    std::size_t in = cfg_.feature_arity;
    for (auto h : cfg_.layer_sizes) {
      layers_.emplace_back(in, h, rng);
      in = h;
    }
    head_ = Linear(in, cfg_.horizon, rng);
  }

  const LstmConfig& config() const { return cfg_; }

  ParameterList parameters() const {
    ParameterList out;
    for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].collect("lstm." + std::to_string(l), out);
    head_.collect("dense", out);
    return out;
  }

  Tensor forward(const Sample& s, bool training, Rng& rng) const {
    const std::size_t a = cfg_.feature_arity;
    if (s.inputs.size() != cfg_.n_in * a)
      fail(ErrorKind::dimension, "lstm: window has " + std::to_string(s.inputs.size()) + " values, expected " +
                                     std::to_string(cfg_.n_in * a));
    std::vector<Tensor> seq;
    for (std::size_t t = 0; t < cfg_.n_in; ++t)
      seq.push_back(Tensor({1, a}, std::vector<double>(s.inputs.begin() + static_cast<std::ptrdiff_t>(t * a),
                                                       s.inputs.begin() + static_cast<std::ptrdiff_t>((t + 1) * a))));
    for (const auto& layer : layers_) {
      seq = lstm_sequence(seq, layer);
      for (auto& h : seq) h = dropout(h, cfg_.dropout, training, rng);
    }
    return reshape(head_(seq.back()), {cfg_.horizon});
  }

  double predict_one_step(const Sample& s) const {
    NoGradGuard no_grad;
    Rng unused(0);
    return forward(s, false, unused)[0];
  }

  std::vector<double> predict(const Sample& s) const {
    NoGradGuard no_grad;
    Rng unused(0);
    return forward(s, false, unused).values();
  }

 private:
  LstmConfig cfg_;
  std::vector<LstmCellParams> layers_;
  Linear head_;
};

}  // namespace tsf
