#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsf/ops.hpp"
#include "tsf/rng.hpp"

namespace tsf {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

inline std::size_t count_parameters(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

/// Values of every parameter, in list order.
using ParameterSnapshot = std::vector<std::vector<double>>;

inline ParameterSnapshot snapshot(const ParameterList& params) {
  ParameterSnapshot s;
  s.reserve(params.size());
  for (const auto& p : params) s.push_back(p.tensor.values());
  return s;
}

inline void restore(ParameterList& params, const ParameterSnapshot& s) {
  if (s.size() != params.size()) fail(ErrorKind::schema, "parameter snapshot does not match the model");
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    if (dst.size() != s[i].size()) fail(ErrorKind::schema, "snapshot size mismatch for " + params[i].name);
    std::copy(s[i].begin(), s[i].end(), dst.begin());
  }
}

/// Glorot/Xavier uniform.
inline Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (auto& v : w) v = rng.uniform(-limit, limit);
  return Tensor({fan_in, fan_out}, std::move(w), true);
}

/// Affine map x W + b on row vectors.
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(xavier_uniform(in, out, rng)), bias(Tensor::zeros({out}, true)) {}

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

  void collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d) : gain(Tensor::full({d}, 1.0, true)), bias(Tensor::zeros({d}, true)) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, kLayerNormEps); }

  void collect(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".gain", gain});
    out.push_back({prefix + ".bias", bias});
  }
};

/// Row matrix [rows x cols] from flat data.
inline Tensor rows_tensor(const std::vector<double>& flat, std::size_t cols) {
  return Tensor({flat.size() / cols, cols}, flat);
}

}  // namespace tsf
