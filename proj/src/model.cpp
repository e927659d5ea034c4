#include "scavit/model.hpp"

#include <numeric>

#include "scavit/errors.hpp"
#include "scavit/ops.hpp"

namespace scavit {

double drop_probability(std::size_t layer, const StochasticDepthSchedule& schedule) {
  if (layer < 1 || layer > schedule.total_layers) {
    throw ValueError("layer index " + std::to_string(layer) + " outside [1, " +
                     std::to_string(schedule.total_layers) + "]");
  }
  if (schedule.mode == LayerDropMode::constant) return schedule.p_const;
  return 1.0 - static_cast<double>(layer) / static_cast<double>(schedule.total_layers);
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  if (image.rank() != 2 || image.dim(0) != image.dim(1)) {
    throw ShapeError("patchify expects a square [H, W] image, got " +
                     shape_to_string(image.shape()));
  }
  const std::size_t size = image.dim(0);
  if (patch == 0 || size % patch != 0) {
    throw ShapeError("image size " + std::to_string(size) + " is not divisible by patch " +
                     std::to_string(patch));
  }
  const std::size_t grid = size / patch;
  const auto px = image.values();
  std::vector<double> out;
  out.reserve(size * size);
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx)
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          out.push_back(px[(gy * patch + y) * size + gx * patch + x]);
  return Tensor::unchecked({grid * grid, patch * patch}, std::move(out));
}

TokenSequence embed(Graph& g, const Tensor& patches, PatchEmbedder& embedder, double dropout_p,
                    bool training, Rng& rng) {
  if (patches.rank() != 2 || patches.dim(1) != embedder.projection.in_dim()) {
    throw ShapeError("patches " + shape_to_string(patches.shape()) +
                     " do not match projection input " +
                     std::to_string(embedder.projection.in_dim()));
  }
  if (embedder.pos_embedding.dim(0) != patches.dim(0) + 1) {
    throw ShapeError("position table has " + std::to_string(embedder.pos_embedding.dim(0)) +
                     " rows for " + std::to_string(patches.dim(0)) + " patches + CLS");
  }
  Var projected = apply(g.constant(patches), embedder.projection);
  Var seq = ops::concat_rows(g.param(embedder.cls_token), projected);
  seq = ops::add(seq, g.param(embedder.pos_embedding));
  return {ops::dropout(seq, dropout_p, training, rng), true};
}

namespace {

Var mlp_branch(Var x, EncoderBlock& block, double dropout_p, bool training, Rng& rng) {
  Var h = ops::gelu(apply(apply(x, block.norm2), block.fc1));
  h = ops::dropout(h, dropout_p, training, rng);
  return ops::dropout(apply(h, block.fc2), dropout_p, training, rng);
}

Var attention_branch(Var x, EncoderBlock& block, double dropout_p, bool training, Rng& rng) {
  Var normed = apply(x, block.norm1);
  return ops::dropout(multi_head_attention(normed, normed, block.attn), dropout_p, training, rng);
}

// x + s*attn(x), then + s*mlp(.). A scale of exactly 1 is skipped so the p = 0
// path is bit-identical to the inference path.
TokenSequence run_residual(TokenSequence seq, EncoderBlock& block, double residual_scale,
                           double dropout_p, bool training, Rng& rng) {
  auto scaled = [residual_scale](Var v) {
    return residual_scale == 1.0 ? v : ops::scale(v, residual_scale);
  };
  Var x = seq.tokens;
  x = ops::add(x, scaled(attention_branch(x, block, dropout_p, training, rng)));
  x = ops::add(x, scaled(mlp_branch(x, block, dropout_p, training, rng)));
  return {x, seq.has_cls};
}

}  // namespace

TokenSequence encoder_forward(TokenSequence seq, EncoderBlock& block, double dropout_p,
                              bool training, Rng& rng) {
  return run_residual(seq, block, 1.0, dropout_p, training, rng);
}

TokenSequence stochastic_block(TokenSequence seq, EncoderBlock& block, double p, double dropout_p,
                               bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ValueError("drop probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return encoder_forward(seq, block, dropout_p, training, rng);
  if (rng.bernoulli(p)) return seq;
  return run_residual(seq, block, 1.0 / (1.0 - p), dropout_p, training, rng);
}

namespace {

PatchEmbedder make_embedder(const ModelConfig& c, std::size_t patch, std::size_t dim, Rng& rng) {
  PatchEmbedder e;
  e.patch_size = patch;
  e.projection = LinearParams::xavier(patch * patch, dim, rng);
  e.cls_token = Tensor::zeros({1, dim}, true);
  const std::size_t rows = (c.image_size / patch) * (c.image_size / patch) + 1;
  std::vector<double> pos(rows * dim);
  for (double& v : pos) v = 0.02 * rng.normal();
  e.pos_embedding = Tensor({rows, dim}, std::move(pos), true);
  return e;
}

EncoderBlock make_block(const ModelConfig& c, std::size_t dim, Rng& rng) {
  EncoderBlock b;
  b.norm1 = LayerNormParams::unit(dim);
  b.attn = AttentionWeights::xavier(dim, c.heads, rng);
  b.norm2 = LayerNormParams::unit(dim);
  b.fc1 = LinearParams::xavier(dim, c.mlp_dim, rng);
  b.fc2 = LinearParams::xavier(c.mlp_dim, dim, rng);
  return b;
}

CalibrationFunction make_calibration(const ModelConfig& c, std::size_t dim, Rng& rng) {
  return c.calibration_mode == CalibrationMode::affine ? CalibrationFunction::identity(dim)
                                                       : CalibrationFunction::mlp(dim, rng);
}

// Unit where the query branch has width `query_dim` and the context branch
// (whose patches are attended) has width `context_dim`.
FusionUnit make_fusion(const ModelConfig& c, std::size_t query_dim, std::size_t context_dim,
                       Rng& rng) {
  FusionUnit u;
  u.selective = c.fusion_kind == FusionKind::selective;
  u.proj = FusionProjections::identity(query_dim, context_dim);
  u.norm = LayerNormParams::unit(context_dim);
  u.attn = AttentionWeights::xavier(context_dim, c.heads, rng);
  if (u.selective) {
    u.query_calibration = make_calibration(c, query_dim, rng);
    u.context_calibration = make_calibration(c, context_dim, rng);
    u.scorer = c.relevance_mode == RelevanceMode::dot ? RelevanceScorer::dot()
                                                      : RelevanceScorer::mlp(context_dim, rng);
  }
  return u;
}

}  // namespace

CrossVit CrossVit::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  CrossVit m;
  m.config_ = config;
  m.small_.embedder = make_embedder(config, config.s_patch, config.dim_s, rng);
  m.large_.embedder = make_embedder(config, config.l_patch, config.dim_l, rng);
  for (std::size_t i = 0; i < config.depth; ++i) {
    m.small_.blocks.push_back(make_block(config, config.dim_s, rng));
    m.large_.blocks.push_back(make_block(config, config.dim_l, rng));
  }
  for (std::size_t r = 0; r < config.cls_depth; ++r) {
    FusionRound round;
    round.l_to_s = make_fusion(config, config.dim_l, config.dim_s, rng);
    if (config.fusion_direction == FusionDirection::bidirectional) {
      round.s_to_l.push_back(make_fusion(config, config.dim_s, config.dim_l, rng));
    }
    m.rounds_.push_back(std::move(round));
  }
  m.head_norm_ = LayerNormParams::unit(config.dim_l);
  m.classifier_ = LinearParams::xavier(config.dim_l, config.num_classes, rng);
  return m;
}

StochasticDepthSchedule CrossVit::schedule() const {
  return {config_.layer_drop_mode, config_.layer_drop_p, config_.total_layers()};
}

std::size_t CrossVit::parameter_count() const {
  std::size_t n = 0;
  visit_parameters([&n](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

void CrossVit::zero_grad() {
  visit_parameters([](const std::string&, Tensor& t) { t.zero_grad(); });
}

TokenSequence CrossVit::embed_branch(Graph& g, const Tensor& image, bool small, bool training,
                                     Rng& rng) {
  Branch& b = small ? small_ : large_;
  return embed(g, patchify(image, b.embedder.patch_size), b.embedder, config_.emb_dropout_p,
               training, rng);
}

TokenSequence CrossVit::run_block(TokenSequence seq, bool small, std::size_t index, bool training,
                                  Rng& rng) {
  Branch& b = small ? small_ : large_;
  const double p = drop_probability(index + 1, schedule());
  return stochastic_block(seq, b.blocks.at(index), p, config_.dropout_p, training, rng);
}

namespace {

std::vector<std::size_t> row_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return rows;
}

// Fused CLS for `query` attending the patches of `context`.
Var fuse_direction(const TokenSequence& query, const TokenSequence& context, FusionUnit& unit,
                   double keep_ratio) {
  Var cls = ops::gather_rows(query.tokens, row_range(0, 1));
  Var patches = ops::gather_rows(context.tokens, row_range(1, context.size()));
  if (!unit.selective) return fuse_block(cls, patches, unit.proj, unit.attn, unit.norm);
  const std::size_t k = keep_count(context.size() - 1, keep_ratio);
  return selective_cross_attention(cls, patches, unit, k).cls;
}

TokenSequence with_cls(const TokenSequence& seq, Var new_cls, Var old_cls, double residual_scale) {
  if (residual_scale != 1.0) {
    new_cls = ops::add(old_cls, ops::scale(ops::sub(new_cls, old_cls), residual_scale));
  }
  Var patches = ops::gather_rows(seq.tokens, row_range(1, seq.size()));
  return {ops::concat_rows(new_cls, patches), true};
}

}  // namespace

std::pair<TokenSequence, TokenSequence> CrossVit::run_fusion(TokenSequence small_seq,
                                                             TokenSequence large_seq,
                                                             std::size_t round, bool training,
                                                             Rng& rng) {
  const double p = drop_probability(config_.depth + round + 1, schedule());
  double residual_scale = 1.0;
  if (training && p > 0.0) {
    if (rng.bernoulli(p)) return {small_seq, large_seq};
    residual_scale = 1.0 / (1.0 - p);
  }
  FusionRound& r = rounds_.at(round);
  Var fused_l = fuse_direction(large_seq, small_seq, r.l_to_s, config_.keep_ratio);
  TokenSequence new_large = with_cls(
      large_seq, fused_l, ops::gather_rows(large_seq.tokens, row_range(0, 1)), residual_scale);
  TokenSequence new_small = small_seq;
  if (!r.s_to_l.empty()) {
    Var fused_s = fuse_direction(small_seq, large_seq, r.s_to_l.front(), config_.keep_ratio);
    new_small = with_cls(small_seq, fused_s, ops::gather_rows(small_seq.tokens, row_range(0, 1)),
                         residual_scale);
  }
  return {new_small, new_large};
}

Var CrossVit::head(TokenSequence large_seq) {
  Var cls = ops::gather_rows(large_seq.tokens, row_range(0, 1));
  return apply(apply(cls, head_norm_), classifier_);
}

Var CrossVit::forward_image(Graph& g, const Tensor& image, bool training, Rng& rng) {
  if (image.rank() != 2 || image.dim(0) != config_.image_size ||
      image.dim(1) != config_.image_size) {
    throw ShapeError("image shape " + shape_to_string(image.shape()) + " does not match " +
                     std::to_string(config_.image_size) + "x" + std::to_string(config_.image_size));
  }
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError("pixel values must lie in [0, 1]");
  }
  TokenSequence s = embed_branch(g, image, true, training, rng);
  TokenSequence l = embed_branch(g, image, false, training, rng);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    s = run_block(s, true, i, training, rng);
    l = run_block(l, false, i, training, rng);
  }
  for (std::size_t r = 0; r < config_.cls_depth; ++r) {
    std::tie(s, l) = run_fusion(s, l, r, training, rng);
  }
  return head(l);
}

Var CrossVit::forward(Graph& g, const Tensor& images, bool training, Rng& rng) {
  if (images.rank() != 3) {
    throw ShapeError("forward expects a [B, H, W] batch, got " + shape_to_string(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  const std::size_t pixels = images.dim(1) * images.dim(2);
  if (batch == 0) throw ShapeError("forward on an empty batch");
  Var logits;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto px = images.values().subspan(b * pixels, pixels);
    Tensor image = Tensor::unchecked({images.dim(1), images.dim(2)}, Buffer(px.begin(), px.end()));
    Var row = forward_image(g, image, training, rng);
    logits = b == 0 ? row : ops::concat_rows(logits, row);
  }
  return logits;
}

}  // namespace scavit
