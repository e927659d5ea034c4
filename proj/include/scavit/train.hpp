#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scavit/config.hpp"
#include "scavit/data.hpp"
#include "scavit/model.hpp"
#include "scavit/rng.hpp"

namespace scavit {

/// Adam moments (empty for sgd), one entry per parameter tensor in
/// `CrossVit::visit_parameters` order.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimizerState init(const CrossVit& model, OptimizerKind kind);

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Applies one update from the accumulated gradients, then zeroes them.
/// Throws ValueError if a trainable parameter has no gradient buffer.
void optimizer_step(CrossVit& model, OptimizerState& state, const TrainConfig& config);

/// Rescales all gradients so their global L2 norm is at most `max_norm`
/// (no-op for max_norm <= 0). Returns the norm before clipping.
double clip_gradients(CrossVit& model, double max_norm);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double wall_ms = 0.0;
};

/// One shuffled pass over `samples`. Throws TrainingDiverged on a non-finite
/// loss. `val_acc` is left at zero.
EpochStats train_epoch(CrossVit& model, const std::vector<Sample>& samples, OptimizerState& opt,
                       const TrainConfig& config, Rng& rng);

struct Predictions {
  std::vector<int> labels;
  std::vector<int> predicted;
  std::vector<double> scores;  ///< softmax probability of class 1
};

/// Inference pass: no dropout, no layer drop, parameters untouched.
Predictions evaluate(CrossVit& model, const std::vector<Sample>& samples,
                     std::size_t batch_size = 32);

double accuracy_of(const Predictions& p);

/// Everything needed to continue a run: the state after `epoch` completed
/// epochs.
struct TrainState {
  RunConfig config;
  std::size_t epoch = 0;
  RngState rng;
  CrossVit model;
  OptimizerState optimizer;
};

/// Fresh state: model drawn from the model seed, training stream from the
/// train seed.
TrainState init_training(const RunConfig& config);

using EpochCallback = std::function<void(const EpochStats&, const TrainState&)>;

/// Trains until `state.epoch == until_epoch`, evaluating on `val` after each
/// epoch. Writes a checkpoint and appends a log line per epoch when the
/// corresponding paths are set in the config.
std::vector<EpochStats> train(TrainState& state, const std::vector<Sample>& train_set,
                              const std::vector<Sample>& val, std::size_t until_epoch,
                              const EpochCallback& on_epoch = {});

std::string epoch_log_line(const EpochStats& stats);

}  // namespace scavit
