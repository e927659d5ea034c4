#include "scavit/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scavit/errors.hpp"
#include "scavit/ops.hpp"

namespace scavit {

AttentionWeights AttentionWeights::xavier(std::size_t dim, std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(dim) + " must be divisible by heads " +
                      std::to_string(heads));
  }
  AttentionWeights w;
  w.w_q = xavier_uniform(dim, dim, rng);
  w.w_k = xavier_uniform(dim, dim, rng);
  w.w_v = xavier_uniform(dim, dim, rng);
  w.w_o = xavier_uniform(dim, dim, rng);
  w.heads = heads;
  return w;
}

AttentionWeights AttentionWeights::zeros(std::size_t dim, std::size_t heads) {
  AttentionWeights w;
  w.w_q = Tensor::zeros({dim, dim}, true);
  w.w_k = Tensor::zeros({dim, dim}, true);
  w.w_v = Tensor::zeros({dim, dim}, true);
  w.w_o = Tensor::zeros({dim, dim}, true);
  w.heads = heads;
  return w;
}

FusionProjections FusionProjections::identity(std::size_t query_dim, std::size_t context_dim) {
  return {LinearParams::identity(query_dim, context_dim),
          LinearParams::identity(context_dim, query_dim)};
}

std::string to_string(CalibrationMode mode) {
  return mode == CalibrationMode::affine ? "affine" : "mlp";
}

std::string to_string(RelevanceMode mode) { return mode == RelevanceMode::dot ? "dot" : "mlp"; }

CalibrationMode parse_calibration_mode(const std::string& text) {
  if (text == "affine") return CalibrationMode::affine;
  if (text == "mlp") return CalibrationMode::mlp;
  throw ConfigError("calibration mode must be affine or mlp, got '" + text + "'");
}

RelevanceMode parse_relevance_mode(const std::string& text) {
  if (text == "dot") return RelevanceMode::dot;
  if (text == "mlp") return RelevanceMode::mlp;
  throw ConfigError("relevance mode must be dot or mlp, got '" + text + "'");
}

std::size_t CalibrationFunction::dim() const {
  return mode == CalibrationMode::affine ? scale.numel() : fc1.in_dim();
}

CalibrationFunction CalibrationFunction::identity(std::size_t dim) {
  CalibrationFunction c;
  c.mode = CalibrationMode::affine;
  c.scale = Tensor::filled({dim}, 1.0, true);
  c.shift = Tensor::zeros({dim}, true);
  return c;
}

CalibrationFunction CalibrationFunction::mlp(std::size_t dim, Rng& rng) {
  CalibrationFunction c;
  c.mode = CalibrationMode::mlp;
  c.fc1 = LinearParams::xavier(dim, dim, rng);
  c.fc2 = LinearParams::xavier(dim, dim, rng);
  return c;
}

RelevanceScorer RelevanceScorer::dot() { return {}; }

RelevanceScorer RelevanceScorer::mlp(std::size_t dim, Rng& rng) {
  RelevanceScorer s;
  s.mode = RelevanceMode::mlp;
  s.fc1 = LinearParams::xavier(2 * dim, dim, rng);
  s.fc2 = LinearParams::xavier(dim, 1, rng);
  return s;
}

Var concat_fusion_tokens(Var cls, Var patches, FusionProjections& proj) {
  if (cls.value().rank() != 2 || cls.shape()[0] != 1) {
    throw ShapeError("fusion CLS must be [1, dim], got " + shape_to_string(cls.shape()));
  }
  Var projected = apply(cls, proj.f);
  return ops::concat_rows(projected, patches);
}

Var multi_head_attention(Var queries, Var tokens, AttentionWeights& w) {
  const std::size_t c = w.dim();
  if (w.heads == 0 || c % w.heads != 0) {
    throw ShapeError("attention width " + std::to_string(c) + " is not divisible by " +
                     std::to_string(w.heads) + " heads");
  }
  Graph& g = queries.graph();
  Var q = ops::matmul(queries, g.param(w.w_q));
  Var k = ops::matmul(tokens, g.param(w.w_k));
  Var v = ops::matmul(tokens, g.param(w.w_v));
  const std::size_t dk = c / w.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> heads;
  heads.reserve(w.heads);
  for (std::size_t h = 0; h < w.heads; ++h) {
    Var qh = w.heads == 1 ? q : ops::slice_cols(q, h * dk, dk);
    Var kh = w.heads == 1 ? k : ops::slice_cols(k, h * dk, dk);
    Var vh = w.heads == 1 ? v : ops::slice_cols(v, h * dk, dk);
    Var logits = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt_dk);
    heads.push_back(ops::matmul(ops::softmax_lastdim(logits), vh));
  }
  Var merged = w.heads == 1 ? heads.front() : ops::concat_cols(heads);
  return ops::matmul(merged, g.param(w.w_o));
}

Var cross_attention(Var seq, AttentionWeights& w) {
  if (w.heads != 1) {
    throw ValueError("cross_attention is single-head; use multi_head_cross_attention for " +
                     std::to_string(w.heads) + " heads");
  }
  Graph& g = seq.graph();
  const std::size_t row0[] = {0};
  Var q = ops::matmul(ops::gather_rows(seq, row0), g.param(w.w_q));
  Var k = ops::matmul(seq, g.param(w.w_k));
  Var v = ops::matmul(seq, g.param(w.w_v));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(w.dim()));
  Var a = ops::softmax_lastdim(ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt));
  return ops::matmul(a, v);
}

Var multi_head_cross_attention(Var seq, AttentionWeights& w) {
  const std::size_t row0[] = {0};
  return multi_head_attention(ops::gather_rows(seq, row0), seq, w);
}

namespace {

// g(projected + MCA(LN(seq))) where seq row 0 is `projected`.
Var fuse_sequence(Var projected, Var seq, FusionProjections& proj, AttentionWeights& w,
                  LayerNormParams& norm) {
  Var refined = ops::add(projected, multi_head_cross_attention(apply(seq, norm), w));
  return apply(refined, proj.g);
}

}  // namespace

Var fuse_block(Var cls, Var patches, FusionProjections& proj, AttentionWeights& w,
               LayerNormParams& norm) {
  Var seq = concat_fusion_tokens(cls, patches, proj);
  const std::size_t row0[] = {0};
  return fuse_sequence(ops::gather_rows(seq, row0), seq, proj, w, norm);
}

Var calibrate(Var seq, CalibrationFunction& c) {
  if (seq.value().cols() != c.dim()) {
    throw ShapeError("calibration of width " + std::to_string(c.dim()) + " applied to tokens " +
                     shape_to_string(seq.shape()));
  }
  Graph& g = seq.graph();
  if (c.mode == CalibrationMode::affine) {
    return ops::add_bias(ops::mul_columns(seq, g.param(c.scale)), g.param(c.shift));
  }
  return apply(ops::gelu(apply(seq, c.fc1)), c.fc2);
}

Var relevance_scores(Var cls, Var patches, RelevanceScorer& scorer) {
  if (cls.value().rank() != 2 || cls.shape()[0] != 1 || patches.value().rank() != 2 ||
      patches.shape()[1] != cls.shape()[1]) {
    throw ShapeError("relevance_scores: CLS " + shape_to_string(cls.shape()) + " and patches " +
                     shape_to_string(patches.shape()) + " disagree");
  }
  const std::size_t n = patches.shape()[0];
  const std::size_t dim = cls.shape()[1];
  if (scorer.mode == RelevanceMode::dot) {
    Var dots = ops::matmul(patches, ops::transpose(cls));  // [n, 1]
    return ops::reshape(ops::scale(dots, 1.0 / std::sqrt(static_cast<double>(dim))), {n});
  }
  if (scorer.fc1.in_dim() != 2 * dim) {
    throw ShapeError("relevance scorer expects width " + std::to_string(scorer.fc1.in_dim() / 2) +
                     ", got " + std::to_string(dim));
  }
  const Var pair_parts[] = {ops::repeat_rows(cls, n), patches};
  Var hidden = ops::gelu(apply(ops::concat_cols(pair_parts), scorer.fc1));
  return ops::reshape(apply(hidden, scorer.fc2), {n});
}

std::size_t keep_count(std::size_t n, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw ValueError("keep ratio must be in (0, 1], got " + std::to_string(keep_ratio));
  }
  if (n == 0) return 0;
  const auto k = static_cast<std::size_t>(std::llround(keep_ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw ValueError("top-K count " + std::to_string(k) + " outside [1, " +
                     std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

TopKSelection select_top_k(Var seq_with_cls, std::span<const double> scores, std::size_t k) {
  if (seq_with_cls.value().rank() != 2 || seq_with_cls.shape()[0] != scores.size() + 1) {
    throw ShapeError("select_top_k: " + std::to_string(scores.size()) + " scores for sequence " +
                     shape_to_string(seq_with_cls.shape()));
  }
  TopKSelection sel;
  sel.rows.reserve(k + 1);
  sel.rows.push_back(0);
  for (std::size_t i : top_k_indices(scores, k)) sel.rows.push_back(i + 1);
  sel.tokens = ops::gather_rows(seq_with_cls, sel.rows);
  return sel;
}

FusionOutput selective_cross_attention(Var cls, Var patches, FusionUnit& unit, std::size_t k) {
  Graph& g = cls.graph();
  Var cal_cls = calibrate(cls, unit.query_calibration);
  Var cal_patches = calibrate(patches, unit.context_calibration);
  Var seq = concat_fusion_tokens(cal_cls, cal_patches, unit.proj);
  const std::size_t row0[] = {0};
  Var projected = ops::gather_rows(seq, row0);
  Var scores = relevance_scores(projected, cal_patches, unit.scorer);

  TopKSelection sel = select_top_k(seq, scores.value().values(), k);
  Var kept = sel.tokens;
  if (unit.scorer.mode == RelevanceMode::mlp) {
    std::vector<std::size_t> patch_rows(sel.rows.begin() + 1, sel.rows.end());
    for (std::size_t& r : patch_rows) --r;
    Var picked = ops::gather_rows(ops::reshape(scores, {scores.value().numel(), 1}), patch_rows);
    Var gates = ops::scale(ops::sigmoid(picked), 2.0);
    Var gate = ops::concat_rows(g.constant(Tensor({1, 1}, {1.0})), gates);
    kept = ops::mul_rows(kept, ops::reshape(gate, {sel.rows.size()}));
  }
  return {fuse_sequence(projected, kept, unit.proj, unit.attn, unit.norm), std::move(sel.rows)};
}

}  // namespace scavit
