#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/nn.hpp"

namespace tsf {

struct Seq2SeqConfig {
  std::size_t dense_units = 16;
  std::size_t gru_units = 32;
  std::size_t attention_units = 32;
  std::size_t n_in = 10;
  std::size_t horizon = 4;
  std::size_t feature_arity = 1;
  double dropout = 0.2;
  double learning_rate = 0.02;
  bool teacher_forcing = true;

  void validate() const {
    if (dense_units == 0 || gru_units == 0 || attention_units == 0)
      fail(ErrorKind::config, "seq2seq: layer sizes must be positive");
    if (n_in == 0 || horizon == 0 || feature_arity == 0) fail(ErrorKind::config, "seq2seq: window sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "seq2seq: dropout must be in [0, 1)");
  }
};

/// z = s(x W_z + h U_z + b_z), r = s(x W_r + h U_r + b_r),
/// n = tanh(x W_n + (r*h) U_n + b_n), h' = (1 - z)*n + z*h.
struct GruCellParams {
  Tensor input_weight;  // X x 3H, columns (z, r, n)
  Tensor state_weight;  // H x 2H, columns (z, r)
  Tensor candidate_weight;  // H x H
  Tensor bias;          // 3H

  GruCellParams() = default;
  GruCellParams(std::size_t input, std::size_t hidden, Rng& rng)
      : input_weight(xavier_uniform(input, 3 * hidden, rng)),
        state_weight(xavier_uniform(hidden, 2 * hidden, rng)),
        candidate_weight(xavier_uniform(hidden, hidden, rng)),
        bias(Tensor::zeros({3 * hidden}, true)) {}

  std::size_t hidden() const { return candidate_weight.dim(0); }
  std::size_t input() const { return input_weight.dim(0); }

  void collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".input_weight", input_weight});
    out.push_back({prefix + ".state_weight", state_weight});
    out.push_back({prefix + ".candidate_weight", candidate_weight});
    out.push_back({prefix + ".bias", bias});
  }
};

inline Tensor gru_cell(const Tensor& x, const Tensor& h, const GruCellParams& p) {
  const std::size_t H = p.hidden();
  if (x.rank() != 2 || x.dim(0) != 1 || x.dim(1) != p.input() || h.rank() != 2 || h.dim(0) != 1 || h.dim(1) != H)
    fail(ErrorKind::dimension, "gru_cell: x " + shape_str(x.shape()) + ", h " + shape_str(h.shape()) + " vs input " +
                                   std::to_string(p.input()) + ", hidden " + std::to_string(H));
  const Tensor xw = add_bias(matmul(x, p.input_weight), p.bias);
  const Tensor hu = matmul(h, p.state_weight);
  const Tensor z = sigmoid(add(slice_cols(xw, 0, H), slice_cols(hu, 0, H)));
  const Tensor r = sigmoid(add(slice_cols(xw, H, H), slice_cols(hu, H, H)));
  const Tensor n = tanh(add(slice_cols(xw, 2 * H, H), matmul(mul(r, h), p.candidate_weight)));
  return add(n, mul(z, sub(h, n)));
}

struct BahdanauParams {
  Linear keys;     // encoder outputs -> attention space (W1)
  Linear queries;  // decoder state -> attention space (W2)
  Tensor score;    // v, A x 1

  BahdanauParams() = default;
  BahdanauParams(std::size_t enc_dim, std::size_t dec_dim, std::size_t units, Rng& rng)
      : keys(enc_dim, units, rng), queries(dec_dim, units, rng), score(xavier_uniform(units, 1, rng)) {}

  void collect(const std::string& prefix, ParameterList& out) const {
    keys.collect(prefix + ".keys", out);
    queries.collect(prefix + ".queries", out);
    out.push_back({prefix + ".score", score});
  }
};

struct AttentionResult {
  Tensor context;  // [1 x E]
  Tensor weights;  // [1 x T]
};

/// score_i = v^T tanh(W1 enc_i + W2 dec); weights = softmax(scores);
/// context = sum_i weights_i enc_i. `projected` may carry enc W1 precomputed.
inline AttentionResult bahdanau_attention(const BahdanauParams& p, const Tensor& dec_state, const Tensor& enc_outputs,
                                          const Tensor* projected = nullptr) {
  if (!enc_outputs.defined()) fail(ErrorKind::contract, "bahdanau_attention: empty encoder output");
  if (enc_outputs.rank() != 2 || enc_outputs.dim(1) != p.keys.in_features() || dec_state.rank() != 2 ||
      dec_state.dim(0) != 1 || dec_state.dim(1) != p.queries.in_features())
    fail(ErrorKind::dimension, "bahdanau_attention: encoder " + shape_str(enc_outputs.shape()) + ", decoder " +
                                   shape_str(dec_state.shape()));
  const Tensor k = projected ? *projected : p.keys(enc_outputs);
  const Tensor q = reshape(p.queries(dec_state), {p.queries.out_features()});
  const Tensor scores = reshape(matmul(tanh(add_bias(k, q)), p.score), {1, enc_outputs.dim(0)});
  Tensor weights = softmax(scores);
  return {matmul(weights, enc_outputs), weights};
}

inline AttentionResult bahdanau_attention(const BahdanauParams& p, const Tensor& dec_state,
                                          const std::vector<Tensor>& enc_rows) {
  if (enc_rows.empty()) fail(ErrorKind::contract, "bahdanau_attention: empty encoder output");
  return bahdanau_attention(p, dec_state, concat_rows(enc_rows));
}

/// Encoder dense -> GRU over the window; decoder GRU steps M times, attending
/// over encoder outputs and fed the previous value (true value under teacher
/// forcing in training, own prediction otherwise).
class Seq2SeqForecaster {
 public:
  Seq2SeqForecaster() = default;

  Seq2SeqForecaster(const Seq2SeqConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t D = cfg_.dense_units, H = cfg_.gru_units;
    enc_dense_ = Linear(cfg_.feature_arity, D, rng);
    enc_gru_ = GruCellParams(D, H, rng);
    attention_ = BahdanauParams(H, H, cfg_.attention_units, rng);
    dec_dense_ = Linear(1, D, rng);
    dec_gru_ = GruCellParams(D + H, H, rng);
    head_ = Linear(H, 1, rng);
  }

  const Seq2SeqConfig& config() const { return cfg_; }

  ParameterList parameters() const {
    ParameterList out;
    enc_dense_.collect("encoder.dense", out);
    enc_gru_.collect("encoder.gru", out);
    attention_.collect("attention", out);
    dec_dense_.collect("decoder.dense", out);
    dec_gru_.collect("decoder.gru", out);
    head_.collect("decoder.output", out);
    return out;
  }

  /// y_true is consulted only when training with teacher forcing.
  Tensor run(std::span<const double> inputs, std::optional<std::span<const double>> y_true, bool training,
             Rng& rng) const {
    const std::size_t a = cfg_.feature_arity, M = cfg_.horizon;
    if (inputs.size() != cfg_.n_in * a)
      fail(ErrorKind::dimension, "seq2seq: window has " + std::to_string(inputs.size()) + " values, expected " +
                                     std::to_string(cfg_.n_in * a));
    const bool forced = training && cfg_.teacher_forcing;
    if (forced && !y_true) fail(ErrorKind::contract, "seq2seq: teacher forcing requires true targets");
    if (forced && y_true->size() < M - 1)
      fail(ErrorKind::dimension, "seq2seq: teacher forcing needs " + std::to_string(M - 1) + " targets");

    Tensor h = Tensor::zeros({1, cfg_.gru_units});
    std::vector<Tensor> enc_rows;
    for (std::size_t t = 0; t < cfg_.n_in; ++t) {
      Tensor x({1, a}, std::vector<double>(inputs.begin() + static_cast<std::ptrdiff_t>(t * a),
                                           inputs.begin() + static_cast<std::ptrdiff_t>((t + 1) * a)));
      h = gru_cell(dropout(enc_dense_(x), cfg_.dropout, training, rng), h, enc_gru_);
      enc_rows.push_back(h);
    }
    const Tensor enc = concat_rows(enc_rows);
    const Tensor keys = attention_.keys(enc);

    Tensor prev = Tensor::matrix(1, 1, {inputs[(cfg_.n_in - 1) * a]});
    std::vector<Tensor> preds;
    for (std::size_t k = 0; k < M; ++k) {
      const auto att = bahdanau_attention(attention_, h, enc, &keys);
      const Tensor in = concat_cols({dropout(dec_dense_(prev), cfg_.dropout, training, rng), att.context});
      h = gru_cell(in, h, dec_gru_);
      Tensor y = head_(dropout(h, cfg_.dropout, training, rng));
      preds.push_back(y);
      if (k + 1 < M) prev = forced ? Tensor::matrix(1, 1, {(*y_true)[k]}) : y;
    }
    return reshape(concat_cols(preds), {M});
  }

  Tensor forward(const Sample& s, bool training, Rng& rng) const {
    std::optional<std::span<const double>> y;
    if (!s.targets.empty()) y = std::span<const double>(s.targets);
    return run(s.inputs, y, training, rng);
  }

  double predict_one_step(const Sample& s) const { return predict(s)[0]; }

  std::vector<double> predict(const Sample& s) const {
    NoGradGuard no_grad;
    Rng unused(0);
    return run(s.inputs, std::nullopt, false, unused).values();
  }

 private:
  Seq2SeqConfig cfg_;
  Linear enc_dense_;
  GruCellParams enc_gru_;
  BahdanauParams attention_;
  Linear dec_dense_;
  GruCellParams dec_gru_;
  Linear head_;
};

}  // namespace tsf
