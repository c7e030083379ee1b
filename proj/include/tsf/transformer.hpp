#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/nn.hpp"

namespace tsf {

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 4;
  std::size_t d_ff = 256;
  double dropout = 0.2;
  std::size_t n_in = 10;
  std::size_t horizon = 4;
  std::size_t feature_arity = 1;
  bool positional_encoding = true;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || n_in == 0 || horizon == 0 || feature_arity == 0)
      fail(ErrorKind::config, "transformer: all sizes must be positive");
    if (d_model % n_heads != 0)
      fail(ErrorKind::config, "transformer: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                                  std::to_string(n_heads));
    if (d_model % 2 != 0) fail(ErrorKind::config, "transformer: d_model must be even for sinusoidal encoding");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::config, "transformer: dropout must be in [0, 1)");
  }

  /// Closed-form trainable parameter count.
  std::size_t parameter_count() const {
    const std::size_t d = d_model, f = feature_arity;
    const std::size_t input = f * d + d;
    const std::size_t attention = 4 * (d * d + d);
    const std::size_t ff = d * d_ff + d_ff + d_ff * d + d;
    const std::size_t norm = 2 * d;
    const std::size_t enc_layer = attention + ff + 2 * norm;
    const std::size_t dec_layer = 2 * attention + ff + 3 * norm;
    return 2 * input + n_layers * (enc_layer + dec_layer) + d + 1;
  }
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same angle).
inline Tensor positional_encoding(std::size_t max_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0)
    fail(ErrorKind::config, "positional_encoding: d_model must be even, got " + std::to_string(d_model));
  std::vector<double> pe(max_len * d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos)
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[pos * d_model + 2 * i] = std::sin(angle);
      pe[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  return Tensor({max_len, d_model}, std::move(pe));
}

/// softmax(Q K^T / sqrt(d_k) [masked]) V for one head.
inline Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                           const AttentionMask* mask = nullptr) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
    fail(ErrorKind::dimension, "attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                                   shape_str(v.shape()) + " are incompatible");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
  Tensor weights = mask ? masked_softmax(scores, *mask) : softmax(scores);
  return matmul(weights, v);
}

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t n_heads, Rng& rng)
      : query(d_model, d_model, rng),
        key(d_model, d_model, rng),
        value(d_model, d_model, rng),
        output(d_model, d_model, rng),
        heads(n_heads) {}

  Tensor operator()(const Tensor& q_in, const Tensor& kv_in, const AttentionMask* mask = nullptr) const {
    const std::size_t d = query.in_features();
    if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(1) != d || kv_in.dim(1) != d)
      fail(ErrorKind::dimension, "multi_head_attention: inputs " + shape_str(q_in.shape()) + " / " +
                                     shape_str(kv_in.shape()) + " vs d_model " + std::to_string(d));
    if (mask && mask->rows != q_in.dim(0))
      fail(ErrorKind::dimension, "multi_head_attention: mask side " + std::to_string(mask->rows) +
                                     " vs query length " + std::to_string(q_in.dim(0)));
    const Tensor q = query(q_in), k = key(kv_in), v = value(kv_in);
    const std::size_t dk = d / heads;
    if (heads == 1) return output(scaled_dot_product_attention(q, k, v, mask));
    std::vector<Tensor> parts;
    parts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h)
      parts.push_back(
          scaled_dot_product_attention(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk), slice_cols(v, h * dk, dk), mask));
    return output(concat_cols(parts));
  }

  void collect(const std::string& prefix, ParameterList& out) const {
    query.collect(prefix + ".query", out);
    key.collect(prefix + ".key", out);
    value.collect(prefix + ".value", out);
    output.collect(prefix + ".output", out);
  }
};

struct FeedForward {
  Linear inner, outer;

  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng) : inner(d_model, d_ff, rng), outer(d_ff, d_model, rng) {}

  Tensor operator()(const Tensor& x) const { return outer(relu(inner(x))); }

  void collect(const std::string& prefix, ParameterList& out) const {
    inner.collect(prefix + ".inner", out);
    outer.collect(prefix + ".outer", out);
  }
};

struct EncoderLayer {
  MultiHeadAttention self_attention;
  LayerNorm norm1;
  FeedForward feed_forward;
  LayerNorm norm2;
};

struct DecoderLayer {
  MultiHeadAttention self_attention;
  LayerNorm norm1;
  MultiHeadAttention cross_attention;
  LayerNorm norm2;
  FeedForward feed_forward;
  LayerNorm norm3;
};

/// Encoder-decoder Transformer mapping an input window to per-step scalar
/// forecasts. Post-norm sublayers with residual connections; the decoder runs
/// under a look-ahead mask on a sequence offset one step behind the targets.
class TransformerModel {
 public:
  TransformerModel() = default;

  TransformerModel(const TransformerConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.d_model;
    encoder_input_ = Linear(cfg_.feature_arity, d, rng);
    decoder_input_ = Linear(cfg_.feature_arity, d, rng);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l)
      encoder_.push_back({MultiHeadAttention(d, cfg_.n_heads, rng), LayerNorm(d), FeedForward(d, cfg_.d_ff, rng),
                          LayerNorm(d)});
    for (std::size_t l = 0; l < cfg_.n_layers; ++l)
      decoder_.push_back({MultiHeadAttention(d, cfg_.n_heads, rng), LayerNorm(d), MultiHeadAttention(d, cfg_.n_heads, rng),
                          LayerNorm(d), FeedForward(d, cfg_.d_ff, rng), LayerNorm(d)});
    output_ = Linear(d, 1, rng);
    pe_ = positional_encoding(std::max(cfg_.n_in, cfg_.horizon), d);
  }

  const TransformerConfig& config() const { return cfg_; }

  ParameterList parameters() const {
    ParameterList out;
    encoder_input_.collect("encoder.input", out);
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
      const std::string p = "encoder." + std::to_string(l);
      encoder_[l].self_attention.collect(p + ".self_attention", out);
      encoder_[l].norm1.collect(p + ".norm1", out);
      encoder_[l].feed_forward.collect(p + ".feed_forward", out);
      encoder_[l].norm2.collect(p + ".norm2", out);
    }
    decoder_input_.collect("decoder.input", out);
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      const std::string p = "decoder." + std::to_string(l);
      decoder_[l].self_attention.collect(p + ".self_attention", out);
      decoder_[l].norm1.collect(p + ".norm1", out);
      decoder_[l].cross_attention.collect(p + ".cross_attention", out);
      decoder_[l].norm2.collect(p + ".norm2", out);
      decoder_[l].feed_forward.collect(p + ".feed_forward", out);
      decoder_[l].norm3.collect(p + ".norm3", out);
    }
    output_.collect("output", out);
    return out;
  }

  /// x: [n_in x arity] -> memory [n_in x d_model].
  Tensor encode(const Tensor& x, bool training, Rng& rng) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.feature_arity || x.dim(0) != cfg_.n_in)
      fail(ErrorKind::dimension, "encode: input " + shape_str(x.shape()) + ", expected [" + std::to_string(cfg_.n_in) +
                                     "x" + std::to_string(cfg_.feature_arity) + "]");
    Tensor h = embed(encoder_input_, x, training, rng);
    for (const auto& layer : encoder_) {
      h = layer.norm1(add(h, dropout(layer.self_attention(h, h), cfg_.dropout, training, rng)));
      h = layer.norm2(add(h, dropout(layer.feed_forward(h), cfg_.dropout, training, rng)));
    }
    return h;
  }

  /// decoder_input: [L x arity], L <= horizon; returns [L] predictions, where
  /// position k targets the step k+1 after the decoder's first row.
  Tensor decode(const Tensor& decoder_input, const Tensor& memory, bool training, Rng& rng,
                const AttentionMask* mask) const {
    if (training && !mask) fail(ErrorKind::contract, "decode: training requires a look-ahead mask");
    if (decoder_input.rank() != 2 || decoder_input.dim(1) != cfg_.feature_arity ||
        decoder_input.dim(0) > cfg_.horizon)
      fail(ErrorKind::dimension, "decode: decoder input " + shape_str(decoder_input.shape()) + " vs arity " +
                                     std::to_string(cfg_.feature_arity) + ", horizon " + std::to_string(cfg_.horizon));
    Tensor h = embed(decoder_input_, decoder_input, training, rng);
    for (const auto& layer : decoder_) {
      h = layer.norm1(add(h, dropout(layer.self_attention(h, h, mask), cfg_.dropout, training, rng)));
      h = layer.norm2(add(h, dropout(layer.cross_attention(h, memory), cfg_.dropout, training, rng)));
      h = layer.norm3(add(h, dropout(layer.feed_forward(h), cfg_.dropout, training, rng)));
    }
    return reshape(output_(h), {decoder_input.dim(0)});
  }

  /// Teacher-forced pass on a window: encoder sees the inputs, decoder sees
  /// (last input row, target rows 0..M-2). Returns [M] scaled predictions.
  Tensor forward(const Sample& s, bool training, Rng& rng) const {
    const std::size_t a = cfg_.feature_arity, m = cfg_.horizon;
    Tensor memory = encode(rows_tensor(s.inputs, a), training, rng);
    std::vector<double> dec(s.inputs.end() - static_cast<std::ptrdiff_t>(a), s.inputs.end());
    dec.insert(dec.end(), s.target_features.begin(), s.target_features.begin() + static_cast<std::ptrdiff_t>((m - 1) * a));
    const auto mask = look_ahead_mask(m);
    return decode(rows_tensor(dec, a), memory, training, rng, &mask);
  }

  /// Autoregressive inference. The decoder starts from the last encoder row;
  /// each prediction is turned into the next decoder row by `next_row`.
  std::vector<double> generate(const std::vector<double>& encoder_rows, std::size_t steps,
                               const std::function<std::vector<double>(std::size_t, double)>& next_row) const {
    if (steps > cfg_.horizon)
      fail(ErrorKind::capability, "forecast: " + std::to_string(steps) + " steps requested but the model decodes " +
                                      std::to_string(cfg_.horizon));
    NoGradGuard no_grad;
    Rng unused(0);
    const std::size_t a = cfg_.feature_arity;
    Tensor memory = encode(rows_tensor(encoder_rows, a), false, unused);
    std::vector<double> dec(encoder_rows.end() - static_cast<std::ptrdiff_t>(a), encoder_rows.end());
    std::vector<double> out;
    for (std::size_t k = 0; k < steps; ++k) {
      const auto mask = look_ahead_mask(k + 1);
      Tensor pred = decode(rows_tensor(dec, a), memory, false, unused, &mask);
      out.push_back(pred[k]);
      if (k + 1 < steps) {
        const auto row = next_row(k, pred[k]);
        dec.insert(dec.end(), row.begin(), row.end());
      }
    }
    return out;
  }

  /// First decoded step for a window, in scaled units.
  double predict_one_step(const Sample& s) const {
    return generate(s.inputs, 1, [](std::size_t, double) { return std::vector<double>{}; })[0];
  }

 private:
  Tensor embed(const Linear& input, const Tensor& x, bool training, Rng& rng) const {
    Tensor h = input(x);
    if (cfg_.positional_encoding) h = add(h, slice_rows(pe_, 0, x.dim(0)));
    return dropout(h, cfg_.dropout, training, rng);
  }

  TransformerConfig cfg_;
  Linear encoder_input_, decoder_input_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Linear output_;
  Tensor pe_;
};

}  // namespace tsf
