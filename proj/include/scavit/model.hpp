#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "scavit/attention.hpp"
#include "scavit/config.hpp"
#include "scavit/graph.hpp"
#include "scavit/layers.hpp"
#include "scavit/rng.hpp"

namespace scavit {

/// A sequence of token rows; row 0 is the CLS token when `has_cls`.
struct TokenSequence {
  Var tokens;
  bool has_cls = true;

  std::size_t size() const { return tokens.shape()[0]; }
  std::size_t dim() const { return tokens.shape()[1]; }
};

struct PatchEmbedder {
  std::size_t patch_size = 0;
  LinearParams projection;  ///< patch_size^2 -> dim
  Tensor cls_token;         ///< [1, dim]
  Tensor pos_embedding;     ///< [n_patches + 1, dim]
};

/// Pre-norm transformer block: x + Attn(LN(x)), then + MLP(LN(.)).
struct EncoderBlock {
  LayerNormParams norm1;
  AttentionWeights attn;
  LayerNormParams norm2;
  LinearParams fc1;
  LinearParams fc2;
};

struct StochasticDepthSchedule {
  LayerDropMode mode = LayerDropMode::constant;
  double p_const = 0.0;
  std::size_t total_layers = 1;
};

/// Drop probability of layer `layer` (1-based): 1 - l/L in linear mode,
/// p_const otherwise.
double drop_probability(std::size_t layer, const StochasticDepthSchedule& schedule);

/// Non-overlapping row-major patches of a square image, each flattened
/// row-major: [n_patches, patch^2].
Tensor patchify(const Tensor& image, std::size_t patch);

/// Project patches, prepend CLS, add positions, apply embedding dropout.
TokenSequence embed(Graph& g, const Tensor& patches, PatchEmbedder& embedder, double dropout_p,
                    bool training, Rng& rng);

TokenSequence encoder_forward(TokenSequence seq, EncoderBlock& block, double dropout_p,
                              bool training, Rng& rng);

/// Stochastic-depth wrapper around `encoder_forward`. Training: skipped with
/// probability p, otherwise each residual branch is scaled by 1/(1-p).
/// Inference: always runs, unscaled.
TokenSequence stochastic_block(TokenSequence seq, EncoderBlock& block, double p, double dropout_p,
                               bool training, Rng& rng);

struct Branch {
  PatchEmbedder embedder;
  std::vector<EncoderBlock> blocks;
};

struct FusionRound {
  FusionUnit l_to_s;               ///< L-branch CLS queries S-branch patches
  std::vector<FusionUnit> s_to_l;  ///< present only in bidirectional mode
};

/// Dual-branch vision transformer with selective cross-attention fusion.
class CrossVit {
 public:
  CrossVit() = default;

  /// Validates the config and draws every parameter from `rng`.
  static CrossVit init(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  /// Logits [B, num_classes] for a batch of images [B, H, W] with pixels in
  /// [0, 1].
  Var forward(Graph& g, const Tensor& images, bool training, Rng& rng);
  /// Logits [1, num_classes] for one image [H, W].
  Var forward_image(Graph& g, const Tensor& image, bool training, Rng& rng);

  template <class Visitor>
  void visit_parameters(Visitor&& visit) {
    visit_all(*this, visit);
  }
  template <class Visitor>
  void visit_parameters(Visitor&& visit) const {
    visit_all(*this, visit);
  }

  std::size_t parameter_count() const;
  void zero_grad();

  // Stage functions used by forward_image; public so that finite-difference
  // checks can recompute only the stages downstream of a perturbed tensor.
  TokenSequence embed_branch(Graph& g, const Tensor& image, bool small, bool training, Rng& rng);
  TokenSequence run_block(TokenSequence seq, bool small, std::size_t index, bool training,
                          Rng& rng);
  /// One fusion round on both branches (S then L token sequences).
  std::pair<TokenSequence, TokenSequence> run_fusion(TokenSequence small_seq,
                                                     TokenSequence large_seq, std::size_t round,
                                                     bool training, Rng& rng);
  Var head(TokenSequence large_seq);

  Branch& small_branch() { return small_; }
  Branch& large_branch() { return large_; }
  std::vector<FusionRound>& fusion_rounds() { return rounds_; }
  LayerNormParams& head_norm() { return head_norm_; }
  LinearParams& classifier() { return classifier_; }

 private:
  template <class Self, class Visitor>
  static void visit_all(Self& self, Visitor& visit);

  StochasticDepthSchedule schedule() const;

  ModelConfig config_;
  Branch small_;
  Branch large_;
  std::vector<FusionRound> rounds_;
  LayerNormParams head_norm_;
  LinearParams classifier_;
};

template <class Self, class Visitor>
void CrossVit::visit_all(Self& self, Visitor& visit) {
  for (auto* branch : {&self.small_, &self.large_}) {
    const std::string p = branch == &self.small_ ? "small" : "large";
    scavit::visit_parameters(branch->embedder.projection, p + ".embed.projection", visit);
    visit(p + ".embed.cls_token", branch->embedder.cls_token);
    visit(p + ".embed.pos_embedding", branch->embedder.pos_embedding);
    for (std::size_t i = 0; i < branch->blocks.size(); ++i) {
      auto& b = branch->blocks[i];
      const std::string bp = p + ".block" + std::to_string(i);
      scavit::visit_parameters(b.norm1, bp + ".norm1", visit);
      scavit::visit_parameters(b.attn, bp + ".attn", visit);
      scavit::visit_parameters(b.norm2, bp + ".norm2", visit);
      scavit::visit_parameters(b.fc1, bp + ".fc1", visit);
      scavit::visit_parameters(b.fc2, bp + ".fc2", visit);
    }
  }
  for (std::size_t r = 0; r < self.rounds_.size(); ++r) {
    const std::string rp = "fusion" + std::to_string(r);
    scavit::visit_parameters(self.rounds_[r].l_to_s, rp + ".l_to_s", visit);
    for (auto& unit : self.rounds_[r].s_to_l) scavit::visit_parameters(unit, rp + ".s_to_l", visit);
  }
  scavit::visit_parameters(self.head_norm_, "head.norm", visit);
  scavit::visit_parameters(self.classifier_, "head.classifier", visit);
}

}  // namespace scavit
