#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scavit/graph.hpp"
#include "scavit/rng.hpp"

// Differentiable operations on Graph values. Tensors of rank > 2 are treated
// as a stack of rows over their trailing dimension wherever an operation is
// documented as acting on [..., d].
namespace scavit::ops {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var x, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// x[..., d] + bias[d]
Var add_bias(Var x, Var bias);
/// x[..., d] * weights[d], column-wise.
Var mul_columns(Var x, Var weights);
/// x[n, d] * gate[n], row-wise.
Var mul_rows(Var x, Var gate);

Var softmax_lastdim(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
/// x[..., din] W[din, dout] + b[dout]
Var linear(Var x, Var weight, Var bias);

Var concat_rows(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
/// Stacks `count` copies of a single-row tensor.
Var repeat_rows(Var x, std::size_t count);

Var dropout(Var x, double p, bool training, Rng& rng);
/// tanh-approximation GELU.
Var gelu(Var x);
Var sigmoid(Var x);

Var sum(Var x);
Var mean(Var x);
/// Mean over rows of -log softmax(logits)[label]; logits are [B, K].
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace scavit::ops
