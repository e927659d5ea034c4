#include "scavit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "scavit/errors.hpp"

namespace scavit::ops {
namespace {

std::span<const double> vals(Var v) { return v.value().values(); }

void require_rank(Var v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     " operand, got shape " + shape_to_string(v.shape()));
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// Vector parameter [d] (or [1, d]) applied along the trailing dimension of x.
void require_trailing(Var x, Var v, const char* op) {
  const std::size_t d = x.value().cols();
  if (v.value().numel() != d || (v.value().rank() == 2 && v.shape()[0] != 1) ||
      v.value().rank() > 2) {
    throw ShapeError(std::string(op) + ": vector of shape " + shape_to_string(v.shape()) +
                     " does not match trailing dim of " + shape_to_string(x.shape()));
  }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
             N = static_cast<Eigen::Index>(n);
  MutMap(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

// C[m,k] += A[m,n] B[k,n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
             N = static_cast<Eigen::Index>(n);
  MutMap(c, M, K).noalias() += ConstMap(a, M, N) * ConstMap(b, K, N).transpose();
}

// C[k,n] += A[m,k]^T B[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k),
             N = static_cast<Eigen::Index>(n);
  MutMap(c, K, N).noalias() += ConstMap(a, M, K).transpose() * ConstMap(b, M, N);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Buffer out(m * n, 0.0);
  gemm_nn(vals(a).data(), vals(b).data(), out.data(), m, k, n);
  return a.graph().record(Tensor::unchecked({m, n}, std::move(out)), {a, b},
                          [a, b, m, k, n](Graph& g, const Tensor&, std::span<const double> dout) {
                            if (auto da = g.adjoint(a); !da.empty()) {
                              gemm_nt(dout.data(), g.value(b).values().data(), da.data(), m, n, k);
                            }
                            if (auto db = g.adjoint(b); !db.empty()) {
                              gemm_tn(g.value(a).values().data(), dout.data(), db.data(), m, k, n);
                            }
                          });
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const auto x = vals(a);
  Buffer out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return a.graph().record(Tensor::unchecked({n, m}, std::move(out)), {a},
                          [a, m, n](Graph& g, const Tensor&, std::span<const double> dout) {
                            auto da = g.adjoint(a);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) da[i * n + j] += dout[j * m + i];
                          });
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                     shape_to_string(shape));
  }
  const auto v = vals(x);
  return x.graph().record(Tensor::unchecked(std::move(shape), Buffer(v.begin(), v.end())), {x},
                          [x](Graph& g, const Tensor&, std::span<const double> dout) {
                            auto dx = g.adjoint(x);
                            for (std::size_t i = 0; i < dout.size(); ++i) dx[i] += dout[i];
                          });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const auto x = vals(a), y = vals(b);
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return a.graph().record(Tensor::unchecked(a.shape(), std::move(out)), {a, b},
                          [a, b](Graph& g, const Tensor&, std::span<const double> dout) {
                            for (Var v : {a, b}) {
                              auto d = g.adjoint(v);
                              for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i];
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const auto x = vals(a), y = vals(b);
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return a.graph().record(Tensor::unchecked(a.shape(), std::move(out)), {a, b},
                          [a, b](Graph& g, const Tensor&, std::span<const double> dout) {
                            if (auto da = g.adjoint(a); !da.empty())
                              for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i];
                            if (auto db = g.adjoint(b); !db.empty())
                              for (std::size_t i = 0; i < db.size(); ++i) db[i] -= dout[i];
                          });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const auto x = vals(a), y = vals(b);
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return a.graph().record(Tensor::unchecked(a.shape(), std::move(out)), {a, b},
                          [a, b](Graph& g, const Tensor&, std::span<const double> dout) {
                            const auto x = g.value(a).values();
                            const auto y = g.value(b).values();
                            if (auto da = g.adjoint(a); !da.empty())
                              for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i] * y[i];
                            if (auto db = g.adjoint(b); !db.empty())
                              for (std::size_t i = 0; i < db.size(); ++i) db[i] += dout[i] * x[i];
                          });
}

Var scale(Var x, double factor) {
  const auto v = vals(x);
  Buffer out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * factor;
  return x.graph().record(Tensor::unchecked(x.shape(), std::move(out)), {x},
                          [x, factor](Graph& g, const Tensor&, std::span<const double> dout) {
                            auto dx = g.adjoint(x);
                            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i] * factor;
                          });
}

Var add_bias(Var x, Var bias) {
  require_trailing(x, bias, "add_bias");
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  const auto v = vals(x), b = vals(bias);
  Buffer out(v.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = v[r * d + j] + b[j];
  return x.graph().record(
      Tensor::unchecked(x.shape(), std::move(out)), {x, bias},
      [x, bias, rows, d](Graph& g, const Tensor&, std::span<const double> dout) {
        if (auto dx = g.adjoint(x); !dx.empty())
          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i];
        if (auto db = g.adjoint(bias); !db.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) db[j] += dout[r * d + j];
      });
}

Var mul_columns(Var x, Var weights) {
  require_trailing(x, weights, "mul_columns");
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  const auto v = vals(x), w = vals(weights);
  Buffer out(v.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = v[r * d + j] * w[j];
  return x.graph().record(
      Tensor::unchecked(x.shape(), std::move(out)), {x, weights},
      [x, weights, rows, d](Graph& g, const Tensor&, std::span<const double> dout) {
        const auto v = g.value(x).values();
        const auto w = g.value(weights).values();
        if (auto dx = g.adjoint(x); !dx.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += dout[r * d + j] * w[j];
        if (auto dw = g.adjoint(weights); !dw.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) dw[j] += dout[r * d + j] * v[r * d + j];
      });
}

Var mul_rows(Var x, Var gate) {
  require_rank(x, 2, "mul_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (gate.value().numel() != n) {
    throw ShapeError("mul_rows: gate of shape " + shape_to_string(gate.shape()) +
                     " does not match rows of " + shape_to_string(x.shape()));
  }
  const auto v = vals(x), s = vals(gate);
  Buffer out(v.size());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = v[r * d + j] * s[r];
  return x.graph().record(Tensor::unchecked(x.shape(), std::move(out)), {x, gate},
                          [x, gate, n, d](Graph& g, const Tensor&, std::span<const double> dout) {
                            const auto v = g.value(x).values();
                            const auto s = g.value(gate).values();
                            if (auto dx = g.adjoint(x); !dx.empty())
                              for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t j = 0; j < d; ++j)
                                  dx[r * d + j] += dout[r * d + j] * s[r];
                            if (auto ds = g.adjoint(gate); !ds.empty())
                              for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t j = 0; j < d; ++j)
                                  ds[r] += dout[r * d + j] * v[r * d + j];
                          });
}

Var softmax_lastdim(Var x) {
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  if (d == 0) throw ShapeError("softmax_lastdim: empty trailing dimension");
  const auto v = vals(x);
  Buffer out(v.size());
  const auto n = static_cast<Eigen::Index>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    Eigen::Map<const Eigen::ArrayXd> in(v.data() + r * d, n);
    Eigen::Map<Eigen::ArrayXd> o(out.data() + r * d, n);
    o = (in - in.maxCoeff()).exp();
    o /= o.sum();
  }
  return x.graph().record(Tensor::unchecked(x.shape(), std::move(out)), {x},
                          [x, rows, d](Graph& g, const Tensor& out, std::span<const double> dout) {
                            auto dx = g.adjoint(x);
                            const auto y = out.values();
                            for (std::size_t r = 0; r < rows; ++r) {
                              double dot = 0.0;
                              for (std::size_t j = 0; j < d; ++j)
                                dot += dout[r * d + j] * y[r * d + j];
                              for (std::size_t j = 0; j < d; ++j)
                                dx[r * d + j] += y[r * d + j] * (dout[r * d + j] - dot);
                            }
                          });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const std::size_t d = x.value().cols(), rows = x.value().rows();
  if (d < 2) throw ShapeError("layer_norm: trailing dimension must be >= 2");
  if (!(eps > 0.0)) throw ValueError("layer_norm: eps must be positive");
  require_trailing(x, gamma, "layer_norm");
  require_trailing(x, beta, "layer_norm");
  const auto v = vals(x), ga = vals(gamma), be = vals(beta);
  Buffer normalized(v.size()), inv_std(rows), out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (in[j] - mu) * is;
      normalized[r * d + j] = xh;
      out[r * d + j] = ga[j] * xh + be[j];
    }
  }
  return x.graph().record(
      Tensor::unchecked(x.shape(), std::move(out)), {x, gamma, beta},
      [x, gamma, beta, rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Graph& g, const Tensor&, std::span<const double> dout) {
        const auto ga = g.value(gamma).values();
        if (auto dg = g.adjoint(gamma); !dg.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) dg[j] += dout[r * d + j] * normalized[r * d + j];
        if (auto db = g.adjoint(beta); !db.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) db[j] += dout[r * d + j];
        auto dx = g.adjoint(x);
        if (dx.empty()) return;
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dout[r * d + j] * ga[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * normalized[r * d + j];
          }
          mean_dxh *= inv_d;
          mean_dxh_xh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dout[r * d + j] * ga[j];
            dx[r * d + j] += inv_std[r] * (dxh - mean_dxh - normalized[r * d + j] * mean_dxh_xh);
          }
        }
      });
}

Var linear(Var x, Var weight, Var bias) {
  require_rank(weight, 2, "linear");
  const std::size_t din = weight.shape()[0], dout_dim = weight.shape()[1];
  if (x.value().cols() != din) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " does not match weight " +
                     shape_to_string(weight.shape()));
  }
  if (bias.value().numel() != dout_dim) {
    throw ShapeError("linear: bias " + shape_to_string(bias.shape()) + " does not match weight " +
                     shape_to_string(weight.shape()));
  }
  const std::size_t rows = x.value().rows();
  const auto b = vals(bias);
  Buffer out(rows * dout_dim);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(r * dout_dim));
  gemm_nn(vals(x).data(), vals(weight).data(), out.data(), rows, din, dout_dim);
  Shape shape = x.shape();
  if (shape.empty()) shape = {1};
  shape.back() = dout_dim;
  return x.graph().record(
      Tensor::unchecked(std::move(shape), std::move(out)), {x, weight, bias},
      [x, weight, bias, rows, din, dout_dim](Graph& g, const Tensor&,
                                             std::span<const double> dout) {
        if (auto dx = g.adjoint(x); !dx.empty())
          gemm_nt(dout.data(), g.value(weight).values().data(), dx.data(), rows, dout_dim, din);
        if (auto dw = g.adjoint(weight); !dw.empty())
          gemm_tn(g.value(x).values().data(), dout.data(), dw.data(), rows, din, dout_dim);
        if (auto db = g.adjoint(bias); !db.empty())
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < dout_dim; ++j) db[j] += dout[r * dout_dim + j];
      });
}

Var concat_rows(Var a, Var b) {
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  const std::size_t m = a.shape()[0], n = b.shape()[0], d = a.shape()[1];
  if (b.shape()[1] != d) {
    throw ShapeError("concat_rows: trailing dims differ, " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Buffer out;
  out.reserve((m + n) * d);
  out.insert(out.end(), vals(a).begin(), vals(a).end());
  out.insert(out.end(), vals(b).begin(), vals(b).end());
  return a.graph().record(Tensor::unchecked({m + n, d}, std::move(out)), {a, b},
                          [a, b, m, d](Graph& g, const Tensor&, std::span<const double> dout) {
                            if (auto da = g.adjoint(a); !da.empty())
                              for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i];
                            if (auto db = g.adjoint(b); !db.empty())
                              for (std::size_t i = 0; i < db.size(); ++i) db[i] += dout[m * d + i];
                          });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts[0].shape().at(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.shape()[0] != rows) {
      throw ShapeError("concat_cols: row counts differ, " + shape_to_string(parts[0].shape()) +
                       " vs " + shape_to_string(p.shape()));
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Buffer out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = vals(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().record(
      Tensor::unchecked({rows, total}, std::move(out)), inputs,
      [inputs, widths, rows, total](Graph& g, const Tensor&, std::span<const double> dout) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (auto d = g.adjoint(inputs[k]); !d.empty())
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j)
                d[r * widths[k] + j] += dout[r * total + offset + j];
          offset += widths[k];
        }
      });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::unordered_set<std::size_t> seen;
  for (std::size_t r : rows) {
    if (r >= n) {
      throw ValueError("gather_rows: index " + std::to_string(r) + " out of range for " +
                       std::to_string(n) + " rows");
    }
    if (!seen.insert(r).second) {
      throw ValueError("gather_rows: duplicate index " + std::to_string(r));
    }
  }
  const auto v = vals(x);
  Buffer out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(v.data() + rows[i] * d, d, out.data() + i * d);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.graph().record(
      Tensor::unchecked({rows.size(), d}, std::move(out)), {x},
      [x, idx = std::move(idx), d](Graph& g, const Tensor&, std::span<const double> dout) {
        auto dx = g.adjoint(x);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < d; ++j) dx[idx[i] * d + j] += dout[i * d + j];
      });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (begin + count > d) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") exceed " + shape_to_string(x.shape()));
  }
  const auto v = vals(x);
  Buffer out(n * count);
  for (std::size_t r = 0; r < n; ++r)
    std::copy_n(v.data() + r * d + begin, count, out.data() + r * count);
  return x.graph().record(
      Tensor::unchecked({n, count}, std::move(out)), {x},
      [x, n, d, begin, count](Graph& g, const Tensor&, std::span<const double> dout) {
        auto dx = g.adjoint(x);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < count; ++j) dx[r * d + begin + j] += dout[r * count + j];
      });
}

Var repeat_rows(Var x, std::size_t count) {
  require_rank(x, 2, "repeat_rows");
  if (x.shape()[0] != 1) {
    throw ShapeError("repeat_rows: expected a single row, got " + shape_to_string(x.shape()));
  }
  const std::size_t d = x.shape()[1];
  const auto v = vals(x);
  Buffer out(count * d);
  for (std::size_t r = 0; r < count; ++r) std::copy_n(v.data(), d, out.data() + r * d);
  return x.graph().record(Tensor::unchecked({count, d}, std::move(out)), {x},
                          [x, count, d](Graph& g, const Tensor&, std::span<const double> dout) {
                            auto dx = g.adjoint(x);
                            for (std::size_t r = 0; r < count; ++r)
                              for (std::size_t j = 0; j < d; ++j) dx[j] += dout[r * d + j];
                          });
}

Var dropout(Var x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ValueError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const auto v = vals(x);
  const double keep_scale = 1.0 / (1.0 - p);
  Buffer mask(v.size());
  Buffer out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = v[i] * mask[i];
  }
  return x.graph().record(
      Tensor::unchecked(x.shape(), std::move(out)), {x},
      [x, mask = std::move(mask)](Graph& g, const Tensor&, std::span<const double> dout) {
        auto dx = g.adjoint(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i] * mask[i];
      });
}

// 0.5 x (1 + tanh(u)) written as x * sigmoid(2u), which vectorizes through exp.
Var gelu(Var x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const auto v = vals(x);
  const auto n = static_cast<Eigen::Index>(v.size());
  Eigen::Map<const Eigen::ArrayXd> in(v.data(), n);
  Buffer gate(v.size()), out(v.size());
  Eigen::Map<Eigen::ArrayXd> s(gate.data(), n);
  s = 1.0 / (1.0 + (-2.0 * kC * (in + kA * in.cube())).exp());
  Eigen::Map<Eigen::ArrayXd>(out.data(), n) = in * s;
  return x.graph().record(
      Tensor::unchecked(x.shape(), std::move(out)), {x},
      [x, gate = std::move(gate)](Graph& g, const Tensor&, std::span<const double> dout) {
        const auto v = g.value(x).values();
        auto dx = g.adjoint(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const double u = v[i], sg = gate[i];
          const double du = 2.0 * kC * (1.0 + 3.0 * kA * u * u);
          dx[i] += dout[i] * (sg + u * sg * (1.0 - sg) * du);
        }
      });
}

Var sigmoid(Var x) {
  const auto v = vals(x);
  Buffer out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
  return x.graph().record(Tensor::unchecked(x.shape(), std::move(out)), {x},
                          [x](Graph& g, const Tensor& out, std::span<const double> dout) {
                            const auto y = out.values();
                            auto dx = g.adjoint(x);
                            for (std::size_t i = 0; i < dx.size(); ++i)
                              dx[i] += dout[i] * y[i] * (1.0 - y[i]);
                          });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : vals(x)) total += v;
  return x.graph().record(Tensor::unchecked({1}, Buffer{total}), {x},
                          [x](Graph& g, const Tensor&, std::span<const double> dout) {
                            auto dx = g.adjoint(x);
                            for (double& d : dx) d += dout[0];
                          });
}

Var mean(Var x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t batch = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(batch) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ValueError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(k) + ")");
    }
  }
  const auto v = vals(logits);
  Buffer probs(v.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* in = v.data() + r * k;
    const double mx = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    loss += lse - in[labels[r]];
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(in[j] - lse);
  }
  loss /= static_cast<double>(batch);
  std::vector<int> y(labels.begin(), labels.end());
  return logits.graph().record(Tensor::unchecked({1}, Buffer{loss}), {logits},
                               [logits, probs = std::move(probs), y = std::move(y), batch, k](
                                   Graph& g, const Tensor&, std::span<const double> dout) {
                                 auto dl = g.adjoint(logits);
                                 const double s = dout[0] / static_cast<double>(batch);
                                 for (std::size_t r = 0; r < batch; ++r)
                                   for (std::size_t j = 0; j < k; ++j) {
                                     const double onehot = static_cast<int>(j) == y[r] ? 1.0 : 0.0;
                                     dl[r * k + j] += s * (probs[r * k + j] - onehot);
                                   }
                               });
}

}  // namespace scavit::ops
