#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tsf/rng.hpp"
#include "tsf/tensor.hpp"

namespace tsf {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::dimension,
         std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
}

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) fail(ErrorKind::dimension, std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

/// Calls f(grad_buffer) on input i when it takes part in differentiation.
template <class F>
void with_input_grad(Node& n, std::size_t i, F&& f) {
  Node* in = n.inputs[i].get();
  if (in->requires_grad) f(in->ensure_grad(), *in);
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op_result(a.shape(), std::move(out), "add", {a, b}, [](detail::Node& n) {
    for (std::size_t k = 0; k < 2; ++k)
      detail::with_input_grad(n, k, [&](auto& g, auto&) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      });
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op_result(a.shape(), std::move(out), "sub", {a, b}, [](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
    detail::with_input_grad(n, 1, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    });
  });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& n) {
    const auto& x = n.inputs[0]->data;
    const auto& y = n.inputs[1]->data;
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y[i];
    });
    detail::with_input_grad(n, 1, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * x[i];
    });
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return make_op_result(a.shape(), std::move(out), "scale", {a}, [s](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
  return make_op_result(a.shape(), std::move(out), "add_scalar", {a}, [](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
  });
}

namespace detail {

template <class F, class D>
Tensor unary(const Tensor& a, const char* name, F f, D dfdx_from_xy) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return make_op_result(a.shape(), std::move(out), name, {a}, [dfdx_from_xy](Node& n) {
    const auto& x = n.inputs[0]->data;
    with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dfdx_from_xy(x[i], n.data[i]);
    });
  });
}

}  // namespace detail

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ----------------------------------------------------------------- reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op_result({1}, {s}, "sum", {a}, [](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (auto& gi : g) gi += n.grad[0];
    });
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Inner product of two same-shaped tensors.
inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

// ------------------------------------------------------------------- matrices

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail(ErrorKind::dimension, "matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node& node) {
    const double* A = node.inputs[0]->data.data();
    const double* B = node.inputs[1]->data.data();
    const double* G = node.grad.data();
    // dA = G * B^T
    detail::with_input_grad(node, 0, [&](auto& ga, auto&) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = G + i * n;
          const double* brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
    });
    // dB = A^T * G
    detail::with_input_grad(node, 1, [&](auto& gb, auto&) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          const double* grow = G + i * n;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    });
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return make_op_result({c, r}, std::move(out), "transpose", {a}, [r, c](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
    });
  });
}

/// Adds a length-n bias to every row of an m x n matrix (or to an n-vector).
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t n = a.cols();
  if (bias.size() != n)
    fail(ErrorKind::dimension, "add_bias: bias " + shape_str(bias.shape()) + " vs rows of " + shape_str(a.shape()));
  std::vector<double> out(a.size());
  const std::size_t m = a.size() / n;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  return make_op_result(a.shape(), std::move(out), "add_bias", {a, bias}, [m, n](detail::Node& node) {
    detail::with_input_grad(node, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    });
    detail::with_input_grad(node, 1, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += node.grad[i * n + j];
    });
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    fail(ErrorKind::dimension, "reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  return make_op_result(std::move(shape), a.values(), "reshape", {a}, [](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
  });
}

/// Columns [start, start+count) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  detail::require_matrix(a, "slice_cols");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (count == 0 || start + count > c)
    fail(ErrorKind::dimension, "slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                   ") out of " + shape_str(a.shape()));
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a[i * c + start + j];
  return make_op_result({r, count}, std::move(out), "slice_cols", {a}, [r, c, start, count](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * c + start + j] += n.grad[i * count + j];
    });
  });
}

/// Rows [start, start+count) of a matrix.
inline Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  detail::require_matrix(a, "slice_rows");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (count == 0 || start + count > r)
    fail(ErrorKind::dimension, "slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                   ") out of " + shape_str(a.shape()));
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(start * c),
                          a.values().begin() + static_cast<std::ptrdiff_t>((start + count) * c));
  return make_op_result({count, c}, std::move(out), "slice_rows", {a}, [c, start](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[start * c + i] += n.grad[i];
    });
  });
}

/// Single element as a scalar tensor.
inline Tensor element(const Tensor& a, std::size_t index) {
  if (index >= a.size())
    fail(ErrorKind::dimension, "element: index " + std::to_string(index) + " out of " + shape_str(a.shape()));
  return make_op_result({1}, {a[index]}, "element", {a}, [index](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) { g[index] += n.grad[0]; });
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::dimension, "concat_cols: nothing to concatenate");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != r)
      fail(ErrorKind::dimension, "concat_cols: part " + shape_str(p.shape()) + " incompatible with " +
                                     std::to_string(r) + " rows");
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t c = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = p[i * c + j];
    off += c;
  }
  return make_op_result({r, total}, std::move(out), "concat_cols", parts,
                        [r, total, offsets](detail::Node& n) {
                          for (std::size_t k = 0; k < n.inputs.size(); ++k)
                            detail::with_input_grad(n, k, [&](auto& g, auto& in) {
                              const std::size_t c = in.shape[1];
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[i * total + offsets[k] + j];
                            });
                        });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::dimension, "concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != c)
      fail(ErrorKind::dimension, "concat_rows: part " + shape_str(p.shape()) + " incompatible with " +
                                     std::to_string(c) + " columns");
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op_result({rows, c}, std::move(out), "concat_rows", parts, [](detail::Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t len = n.inputs[k]->data.size();
      detail::with_input_grad(n, k, [&](auto& g, auto&) {
        for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[off + i];
      });
      off += len;
    }
  });
}

// -------------------------------------------------------- softmax & attention

/// Softmax over the last axis with max subtraction.
inline Tensor softmax(const Tensor& x) {
  const std::size_t n = x.cols();
  if (x.size() == 0 || n == 0) fail(ErrorKind::dimension, "softmax: empty axis");
  const std::size_t slices = x.size() / n;
  std::vector<double> out(x.size());
  for (std::size_t s = 0; s < slices; ++s) {
    const double* in = x.data().data() + s * n;
    double* o = out.data() + s * n;
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  return make_op_result(x.shape(), std::move(out), "softmax", {x}, [slices, n](detail::Node& node) {
    detail::with_input_grad(node, 0, [&](auto& g, auto&) {
      for (std::size_t s = 0; s < slices; ++s) {
        const double* y = node.data.data() + s * n;
        const double* dy = node.grad.data() + s * n;
        double inner = 0.0;
        for (std::size_t j = 0; j < n; ++j) inner += dy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) g[s * n + j] += y[j] * (dy[j] - inner);
      }
    });
  });
}

/// Boolean attention mask: cell (i, j) permits query i to attend to key j.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> allowed;

  bool permits(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
  std::size_t permitted_count() const {
    std::size_t c = 0;
    for (auto a : allowed) c += a;
    return c;
  }
};

/// Causal mask: position i may see positions j <= i.
inline AttentionMask look_ahead_mask(std::size_t n) {
  if (n == 0) fail(ErrorKind::parameter, "look_ahead_mask: n must be >= 1");
  AttentionMask m{n, n, std::vector<unsigned char>(n * n, 0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m.allowed[i * n + j] = 1;
  return m;
}

/// Row-wise softmax over permitted cells only; forbidden cells get weight
/// exactly 0, which is what adding -inf before a plain softmax would give.
inline Tensor masked_softmax(const Tensor& scores, const AttentionMask& mask) {
  detail::require_matrix(scores, "masked_softmax");
  const std::size_t r = scores.dim(0), c = scores.dim(1);
  if (mask.rows != r || mask.cols != c)
    fail(ErrorKind::dimension, "masked_softmax: mask " + std::to_string(mask.rows) + "x" +
                                   std::to_string(mask.cols) + " vs scores " + shape_str(scores.shape()));
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (mask.permits(i, j)) mx = std::max(mx, scores[i * c + j]);
    if (mx == -std::numeric_limits<double>::infinity())
      fail(ErrorKind::contract, "masked_softmax: row " + std::to_string(i) + " has no permitted cell");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mask.permits(i, j)) z += (out[i * c + j] = std::exp(scores[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return make_op_result(scores.shape(), std::move(out), "masked_softmax", {scores}, [r, c](detail::Node& node) {
    detail::with_input_grad(node, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = node.data.data() + i * c;
        const double* dy = node.grad.data() + i * c;
        double inner = 0.0;
        for (std::size_t j = 0; j < c; ++j) inner += dy[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (dy[j] - inner);
      }
    });
  });
}

// -------------------------------------------------------------- normalization

inline constexpr double kLayerNormEps = 1e-6;

/// Normalizes each vector along the last axis to zero mean / unit population
/// variance, then applies gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps) {
  const std::size_t d = x.cols();
  if (d == 0) fail(ErrorKind::dimension, "layer_norm: empty feature axis");
  if (gain.size() != d || bias.size() != d)
    fail(ErrorKind::dimension, "layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                                   shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  const std::size_t m = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* v = x.data().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += v[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (v[j] - mu) * (v[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (v[j] - mu) * inv_std[i];
      out[i * d + j] = gain[j] * xhat[i * d + j] + bias[j];
    }
  }
  return make_op_result(
      x.shape(), std::move(out), "layer_norm", {x, gain, bias},
      [m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& n) {
        const auto& gain = n.inputs[1]->data;
        const double* dy = n.grad.data();
        detail::with_input_grad(n, 0, [&](auto& g, auto&) {
          const double dd = static_cast<double>(d);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[i * d + j] * gain[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[i * d + j];
            }
            mean_dxhat /= dd;
            mean_dxhat_xhat /= dd;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[i * d + j] * gain[j];
              g[i * d + j] += inv_std[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
            }
          }
        });
        detail::with_input_grad(n, 1, [&](auto& g, auto&) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j] * xhat[i * d + j];
        });
        detail::with_input_grad(n, 2, [&](auto& g, auto&) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[i * d + j];
        });
      });
}

// ------------------------------------------------------------------- dropout

/// Inverted dropout: survivors are scaled by 1/(1-rate) so evaluation is identity.
inline Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    fail(ErrorKind::parameter, "dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return make_op_result(x.shape(), std::move(out), "dropout", {x}, [mask = std::move(mask)](detail::Node& n) {
    detail::with_input_grad(n, 0, [&](auto& g, auto&) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
    });
  });
}

}  // namespace tsf
