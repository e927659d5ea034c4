#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scavit/graph.hpp"
#include "scavit/layers.hpp"
#include "scavit/rng.hpp"

namespace scavit {

/// Query/key/value/output projections, each [C, C], split into `heads`
/// channel blocks of width C / heads.
struct AttentionWeights {
  Tensor w_q;
  Tensor w_k;
  Tensor w_v;
  Tensor w_o;
  std::size_t heads = 1;

  std::size_t dim() const { return w_q.dim(0); }
  std::size_t head_dim() const { return dim() / heads; }

  static AttentionWeights xavier(std::size_t dim, std::size_t heads, Rng& rng);
  static AttentionWeights zeros(std::size_t dim, std::size_t heads);
};

/// f maps the query branch's CLS into the context branch's width, g maps the
/// fused CLS back.
struct FusionProjections {
  LinearParams f;
  LinearParams g;

  static FusionProjections identity(std::size_t query_dim, std::size_t context_dim);
};

enum class CalibrationMode { affine, mlp };
enum class RelevanceMode { dot, mlp };

std::string to_string(CalibrationMode mode);
std::string to_string(RelevanceMode mode);
CalibrationMode parse_calibration_mode(const std::string& text);
RelevanceMode parse_relevance_mode(const std::string& text);

/// Per-branch feature calibration c(.). Affine mode is a per-channel
/// scale/shift (identity at init); mlp mode is dim -> dim -> dim with GELU.
struct CalibrationFunction {
  CalibrationMode mode = CalibrationMode::affine;
  Tensor scale;
  Tensor shift;
  LinearParams fc1;
  LinearParams fc2;

  std::size_t dim() const;

  static CalibrationFunction identity(std::size_t dim);
  static CalibrationFunction mlp(std::size_t dim, Rng& rng);
};

/// Scores each context patch against the query CLS. Dot mode is the scaled
/// dot product and has no parameters; mlp mode runs [cls || patch] through
/// 2*dim -> dim -> 1.
struct RelevanceScorer {
  RelevanceMode mode = RelevanceMode::dot;
  LinearParams fc1;
  LinearParams fc2;

  static RelevanceScorer dot();
  static RelevanceScorer mlp(std::size_t dim, Rng& rng);
};

/// Everything one fusion direction owns. With `selective == false` the unit
/// is the plain cross-attention fusion block and ignores calibration and
/// scoring.
struct FusionUnit {
  bool selective = true;
  FusionProjections proj;
  LayerNormParams norm;
  AttentionWeights attn;
  CalibrationFunction query_calibration;
  CalibrationFunction context_calibration;
  RelevanceScorer scorer;
};

/// [f(cls) || patches]
Var concat_fusion_tokens(Var cls, Var patches, FusionProjections& proj);

/// Multi-head attention of `queries` over `tokens`; output is
/// Concat(head_1..head_h) W_o with one row per query.
Var multi_head_attention(Var queries, Var tokens, AttentionWeights& w);

/// Single-head CLS cross-attention softmax(q k^T / sqrt(C)) v over the whole
/// sequence (row 0 is both the query and one of the keys). No output
/// projection.
Var cross_attention(Var seq, AttentionWeights& w);

/// Multi-head version of `cross_attention` followed by W_o.
Var multi_head_cross_attention(Var seq, AttentionWeights& w);

/// Refines the query CLS with the context patches and projects it back:
/// g(f(cls) + MCA(LN([f(cls) || patches]))).
Var fuse_block(Var cls, Var patches, FusionProjections& proj, AttentionWeights& w,
               LayerNormParams& norm);

Var calibrate(Var seq, CalibrationFunction& c);

/// One raw score per patch row, shape [n].
Var relevance_scores(Var cls, Var patches, RelevanceScorer& scorer);

/// Number of kept patches for a keep ratio: max(1, round(ratio * n)), at most n.
std::size_t keep_count(std::size_t n, double keep_ratio);

/// Patch indices (0-based, excluding CLS) of the K highest scores, ties to the
/// lower index, returned in ascending order.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

struct TopKSelection {
  Var tokens;                     ///< [K+1, dim], CLS first
  std::vector<std::size_t> rows;  ///< source rows in seq_with_cls, rows[0] == 0
};

/// Keeps the CLS row plus the K best-scoring patch rows in original order.
TopKSelection select_top_k(Var seq_with_cls, std::span<const double> scores, std::size_t k);

struct FusionOutput {
  Var cls;                                 ///< [1, query_dim]
  std::vector<std::size_t> selected_rows;  ///< rows of [f(cls) || patches] kept
};

/// Calibrate both branches, score and keep the top-K context patches, then
/// run the fusion block on the reduced sequence. In mlp scorer mode the kept
/// patches are also gated by 2*sigmoid(score) so the scorer is trainable.
FusionOutput selective_cross_attention(Var cls, Var patches, FusionUnit& unit, std::size_t k);

template <class U, class Visitor>
  requires std::same_as<std::remove_const_t<U>, AttentionWeights>
void visit_parameters(U& w, const std::string& prefix, Visitor&& visit) {
  visit(prefix + ".w_q", w.w_q);
  visit(prefix + ".w_k", w.w_k);
  visit(prefix + ".w_v", w.w_v);
  visit(prefix + ".w_o", w.w_o);
}

template <class U, class Visitor>
  requires std::same_as<std::remove_const_t<U>, CalibrationFunction>
void visit_parameters(U& c, const std::string& prefix, Visitor&& visit) {
  if (c.mode == CalibrationMode::affine) {
    visit(prefix + ".scale", c.scale);
    visit(prefix + ".shift", c.shift);
  } else {
    visit_parameters(c.fc1, prefix + ".fc1", visit);
    visit_parameters(c.fc2, prefix + ".fc2", visit);
  }
}

template <class U, class Visitor>
  requires std::same_as<std::remove_const_t<U>, FusionUnit>
void visit_parameters(U& u, const std::string& prefix, Visitor&& visit) {
  visit_parameters(u.proj.f, prefix + ".f", visit);
  visit_parameters(u.proj.g, prefix + ".g", visit);
  visit_parameters(u.norm, prefix + ".norm", visit);
  visit_parameters(u.attn, prefix + ".attn", visit);
  if (!u.selective) return;
  visit_parameters(u.query_calibration, prefix + ".query_calibration", visit);
  visit_parameters(u.context_calibration, prefix + ".context_calibration", visit);
  if (u.scorer.mode == RelevanceMode::mlp) {
    visit_parameters(u.scorer.fc1, prefix + ".scorer.fc1", visit);
    visit_parameters(u.scorer.fc2, prefix + ".scorer.fc2", visit);
  }
}

}  // namespace scavit
