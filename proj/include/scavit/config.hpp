#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "scavit/attention.hpp"

namespace scavit {

enum class LayerDropMode { constant, linear_schedule };
enum class FusionDirection { l_to_s, bidirectional };
/// `selective` runs calibration + top-K selection before cross-attention,
/// `plain` is the original cross-attention fusion block.
enum class FusionKind { selective, plain };
enum class OptimizerKind { sgd, adam };

std::string to_string(LayerDropMode mode);
std::string to_string(FusionDirection direction);
std::string to_string(FusionKind kind);
std::string to_string(OptimizerKind kind);

struct ModelConfig {
  std::size_t image_size = 256;
  std::size_t s_patch = 16;
  std::size_t l_patch = 32;
  std::size_t dim_s = 256;
  std::size_t dim_l = 256;
  std::size_t depth = 6;
  std::size_t cls_depth = 2;
  std::size_t heads = 12;
  std::size_t mlp_dim = 512;
  double dropout_p = 0.15;
  double emb_dropout_p = 0.15;
  double layer_drop_p = 0.05;
  LayerDropMode layer_drop_mode = LayerDropMode::constant;
  double keep_ratio = 0.5;
  CalibrationMode calibration_mode = CalibrationMode::affine;
  RelevanceMode relevance_mode = RelevanceMode::dot;
  FusionDirection fusion_direction = FusionDirection::l_to_s;
  FusionKind fusion_kind = FusionKind::selective;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  std::size_t s_tokens() const { return (image_size / s_patch) * (image_size / s_patch); }
  std::size_t l_tokens() const { return (image_size / l_patch) * (image_size / l_patch); }
  /// Layers seen by the stochastic-depth schedule: encoder blocks then fusion rounds.
  std::size_t total_layers() const { return depth + cls_depth; }

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  /// The hyperparameter list used for the full-size experiments.
  static ModelConfig full_scale();
  /// 32x32 images, patches 4/8, width 32, depth 2, one fusion round, 4 heads.
  static ModelConfig desk();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global-norm clipping threshold; 0 disables clipping.
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  std::string checkpoint_path;
  std::string log_path;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses flat `key = value` text. `#` starts a comment, unknown keys are
/// rejected and omitted keys keep their defaults. `preset = desk` (or
/// `full`) selects the base defaults and may appear anywhere in the file.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

/// Every effective key written out, in a form `parse_config_text` accepts.
std::string serialize_config(const RunConfig& config);

}  // namespace scavit
