#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tsf/gradcheck.hpp"
#include "tsf/losses.hpp"
#include "tsf/transformer.hpp"

namespace tsf {
namespace {

TransformerConfig tiny_config(std::size_t arity = 1) {
  TransformerConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 16;
  c.dropout = 0.2;
  c.n_in = 5;
  c.horizon = 4;
  c.feature_arity = arity;
  return c;
}

Sample random_sample(const TransformerConfig& c, Rng& rng) {
  Sample s;
  for (std::size_t i = 0; i < c.n_in * c.feature_arity; ++i) s.inputs.push_back(rng.uniform());
  for (std::size_t i = 0; i < c.horizon * c.feature_arity; ++i) s.target_features.push_back(rng.uniform());
  for (std::size_t m = 0; m < c.horizon; ++m) s.targets.push_back(s.target_features[m * c.feature_arity]);
  return s;
}

Tensor random_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor({rows, cols}, std::move(v));
}

TEST(PositionalEncoding, Examples) {
  auto pe = positional_encoding(6, 4);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(pe.at(0, c), c % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe.at(1, 0), 0.84147, 1e-5);
  for (double v : pe.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  // column 2 uses angle pos / 10000^(2/4) = pos / 100
  EXPECT_DOUBLE_EQ(pe.at(3, 2), std::sin(3.0 / 100.0));
  EXPECT_DOUBLE_EQ(pe.at(3, 3), std::cos(3.0 / 100.0));
  EXPECT_THROW(positional_encoding(4, 5), Error);
}

TEST(LookAheadMask, Examples) {
  EXPECT_EQ(look_ahead_mask(1).permitted_count(), 1u);
  const auto m = look_ahead_mask(3);
  EXPECT_EQ(m.permitted_count(), 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      row += m.permits(i, j);
      EXPECT_EQ(m.permits(i, j), j <= i);
    }
    EXPECT_EQ(row, i + 1);
  }
}

TEST(Attention, OrthonormalQueriesAndKeys) {
  auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  // scores = I / sqrt(2); row softmax by hand
  const double hi = std::exp(1.0 / std::sqrt(2.0)), lo = 1.0;
  auto out = scaled_dot_product_attention(eye, eye, eye);
  EXPECT_NEAR(out.at(0, 0), hi / (hi + lo), 1e-15);
  EXPECT_NEAR(out.at(0, 1), lo / (hi + lo), 1e-15);
  EXPECT_NEAR(out.at(1, 1), hi / (hi + lo), 1e-15);

  // sharp scaling drives rows toward one-hot
  auto sharp = Tensor::matrix(2, 2, {10, 0, 0, 10});
  auto o2 = scaled_dot_product_attention(sharp, sharp, eye);
  const double e = std::exp(100.0 / std::sqrt(2.0));
  EXPECT_NEAR(o2.at(0, 0), e / (e + 1.0), 1e-15);
  EXPECT_GT(o2.at(0, 0), 1.0 - 1e-12);
  EXPECT_LT(o2.at(1, 0), 1e-12);
}

TEST(Attention, IdenticalKeysGiveMaskedRunningMean) {
  Rng rng(3);
  auto q = random_rows(4, 3, rng);
  auto k = Tensor::matrix(4, 3, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3});
  auto v = random_rows(4, 2, rng);
  const auto mask = look_ahead_mask(4);
  auto out = scaled_dot_product_attention(q, k, v, &mask);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0;
      for (std::size_t j = 0; j <= i; ++j) mean += v.at(j, c);
      EXPECT_NEAR(out.at(i, c), mean / static_cast<double>(i + 1), 1e-14);
    }
  // row 0 only sees itself
  EXPECT_EQ(out.at(0, 0), v.at(0, 0));
  EXPECT_EQ(out.at(0, 1), v.at(0, 1));
}

TEST(Attention, MultiHeadShapesAndErrors) {
  Rng rng(4);
  MultiHeadAttention mha(8, 4, rng);
  auto x = random_rows(5, 8, rng);
  EXPECT_EQ(mha(x, x).shape(), (Shape{5, 8}));
  auto mem = random_rows(7, 8, rng);
  EXPECT_EQ(mha(x, mem).shape(), (Shape{5, 8}));
  EXPECT_THROW(mha(random_rows(5, 6, rng), mem), Error);
  const auto wrong = look_ahead_mask(3);
  EXPECT_THROW(mha(x, x, &wrong), Error);
}

TEST(TransformerConfig, Validation) {
  auto c = tiny_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config();
  c.d_model = 6;
  c.n_heads = 3;
  c.validate();
  c.d_model = 9;
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Transformer, ParameterCountMatchesClosedForm) {
  for (std::size_t arity : {1u, 4u, 8u}) {
    for (std::size_t layers : {1u, 2u, 4u}) {
      auto c = tiny_config(arity);
      c.n_layers = layers;
      Rng rng(1);
      TransformerModel model(c, rng);
      EXPECT_EQ(count_parameters(model.parameters()), c.parameter_count());
    }
  }
  TransformerConfig defaults;
  Rng rng(2);
  EXPECT_EQ(count_parameters(TransformerModel(defaults, rng).parameters()), defaults.parameter_count());
}

TEST(Transformer, EncodeShapeAndDeterminism) {
  auto c = tiny_config(3);
  Rng rng(5);
  TransformerModel model(c, rng);
  auto x = random_rows(5, 3, rng);
  Rng r1(0), r2(99);
  auto a = model.encode(x, false, r1);
  auto b = model.encode(x, false, r2);
  EXPECT_EQ(a.shape(), (Shape{5, 8}));
  EXPECT_EQ(a.values(), b.values());
  EXPECT_THROW(model.encode(random_rows(5, 2, rng), false, r1), Error);
  EXPECT_THROW(model.encode(random_rows(4, 3, rng), false, r1), Error);
}

TEST(Transformer, ZeroWeightsLeaveOnlyNormBiases) {
  auto c = tiny_config();
  Rng rng(6);
  TransformerModel model(c, rng);
  auto params = model.parameters();
  std::vector<double> final_bias;
  for (auto& p : params) {
    auto d = p.tensor.mutable_data();
    const bool norm_bias = p.name.find("norm") != std::string::npos && p.name.ends_with(".bias");
    for (auto& v : d) v = norm_bias ? rng.uniform(-1, 1) : 0.0;
    if (p.name == "encoder.0.norm2.bias") final_bias = p.tensor.values();
  }
  Rng unused(0);
  auto out = model.encode(Tensor::zeros({5, 1}), false, unused);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(out.at(r, j), final_bias[j]);
}

TEST(Transformer, DecodeRequiresMaskWhenTraining) {
  auto c = tiny_config();
  Rng rng(7);
  TransformerModel model(c, rng);
  auto mem = model.encode(random_rows(5, 1, rng), false, rng);
  try {
    model.decode(random_rows(4, 1, rng), mem, true, rng, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contract);
  }
  EXPECT_EQ(model.decode(random_rows(4, 1, rng), mem, false, rng, nullptr).shape(), (Shape{4}));
}

TEST(Transformer, CausalityExhaustiveForHorizonFour) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = tiny_config(2);
    Rng rng(100 + seed);
    TransformerModel model(c, rng);
    Rng unused(0);
    auto memory = model.encode(random_rows(5, 2, rng), false, unused);
    const auto mask = look_ahead_mask(4);
    auto base_in = random_rows(4, 2, rng);
    auto base = model.decode(base_in, memory, false, unused, &mask);
    // perturb every non-empty subset of positions > k, for every k
    for (std::size_t k = 0; k < 4; ++k)
      for (unsigned subset = 1; subset < 16; ++subset) {
        bool touches_only_future = true;
        for (std::size_t p = 0; p < 4; ++p)
          if ((subset >> p & 1U) && p <= k) touches_only_future = false;
        if (!touches_only_future) continue;
        std::vector<double> v = base_in.values();
        for (std::size_t p = 0; p < 4; ++p)
          if (subset >> p & 1U)
            for (std::size_t a = 0; a < 2; ++a) v[p * 2 + a] += rng.uniform(-5, 5);
        auto out = model.decode(Tensor({4, 2}, v), memory, false, unused, &mask);
        for (std::size_t q = 0; q <= k; ++q) EXPECT_EQ(out[q], base[q]) << "k=" << k << " subset=" << subset;
      }
  }
}

TEST(Transformer, TenInFourOutWindowLayout) {
  // encoder (x1..x10), decoder input (x10..x13), targets (x11..x14)
  auto c = tiny_config();
  c.n_in = 10;
  std::vector<double> series(14);
  for (std::size_t i = 0; i < 14; ++i) series[i] = static_cast<double>(i + 1);
  auto ds = make_windows(series, 10, 4);
  ASSERT_EQ(ds.size(), 1u);
  const auto& s = ds.samples[0];
  EXPECT_EQ(s.inputs.back(), 10.0);
  EXPECT_EQ(s.targets, (std::vector<double>{11, 12, 13, 14}));
  // decoder input = last input followed by the first M-1 targets
  std::vector<double> dec{s.inputs.back()};
  dec.insert(dec.end(), s.target_features.begin(), s.target_features.begin() + 3);
  EXPECT_EQ(dec, (std::vector<double>{10, 11, 12, 13}));

  Rng rng(8);
  TransformerModel model(c, rng);
  Rng unused(0);
  auto teacher = model.forward(s, false, unused);
  auto memory = model.encode(Tensor({10, 1}, s.inputs), false, unused);
  const auto mask = look_ahead_mask(4);
  auto direct = model.decode(Tensor({4, 1}, dec), memory, false, unused, &mask);
  EXPECT_EQ(teacher.values(), direct.values());
}

TEST(Transformer, ForecastSteps) {
  auto c = tiny_config();
  Rng rng(9);
  TransformerModel model(c, rng);
  auto s = random_sample(c, rng);
  auto no_row = [](std::size_t, double p) { return std::vector<double>{p}; };
  try {
    model.generate(s.inputs, 5, no_row);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
  }
  Rng unused(0);
  auto memory = model.encode(Tensor({5, 1}, s.inputs), false, unused);
  const auto mask = look_ahead_mask(4);
  std::vector<double> dec{s.inputs.back(), 0.3, 0.6, 0.9};
  auto full = model.decode(Tensor({4, 1}, dec), memory, false, unused, &mask);
  EXPECT_EQ(model.predict_one_step(s), full[0]);

  auto a = model.generate(s.inputs, 4, no_row);
  auto b = model.generate(s.inputs, 4, no_row);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0], full[0]);
  // autoregressive step 2 equals a masked decode fed the first prediction
  std::vector<double> fed{s.inputs.back(), a[0]};
  auto mask2 = look_ahead_mask(2);
  EXPECT_EQ(model.decode(Tensor({2, 1}, fed), memory, false, unused, &mask2)[1], a[1]);
}

TEST(Transformer, PositionalEncodingBreaksPermutationEquivariance) {
  for (bool with_pe : {false, true}) {
    auto c = tiny_config();
    c.n_in = 2;
    c.positional_encoding = with_pe;
    Rng rng(10);
    TransformerModel model(c, rng);
    Rng unused(0);
    auto x = Tensor::matrix(2, 1, {0.3, -0.8});
    auto swapped = Tensor::matrix(2, 1, {-0.8, 0.3});
    auto a = model.encode(x, false, unused);
    auto b = model.encode(swapped, false, unused);
    bool equivariant = true;
    for (std::size_t j = 0; j < 8; ++j)
      equivariant = equivariant && a.at(0, j) == b.at(1, j) && a.at(1, j) == b.at(0, j);
    EXPECT_EQ(equivariant, !with_pe);
  }
}

TEST(Transformer, FullModelGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = tiny_config(2);
    Rng rng(200 + seed);
    TransformerModel model(c, rng);
    auto s = random_sample(c, rng);
    auto params = model.parameters();
    std::vector<Tensor> tensors;
    for (auto& p : params) tensors.push_back(p.tensor);
    const Rng drop = rng.split(1);
    const double err = finite_difference_check(
        [&] {
          Rng r = drop;
          return mse_loss(model.forward(s, true, r), s.targets);
        },
        tensors);
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

}  // namespace
}  // namespace tsf
