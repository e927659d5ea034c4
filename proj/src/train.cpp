#include "scavit/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "scavit/checkpoint.hpp"
#include "scavit/errors.hpp"
#include "scavit/ops.hpp"

namespace scavit {

OptimizerState OptimizerState::init(const CrossVit& model, OptimizerKind kind) {
  OptimizerState s;
  s.kind = kind;
  model.visit_parameters([&](const std::string& name, const Tensor& t) {
    s.names.push_back(name);
    if (kind == OptimizerKind::adam) {
      s.m.emplace_back(t.numel(), 0.0);
      s.v.emplace_back(t.numel(), 0.0);
    }
  });
  return s;
}

void optimizer_step(CrossVit& model, OptimizerState& state, const TrainConfig& config) {
  std::size_t index = 0;
  model.visit_parameters([&](const std::string& name, Tensor&) {
    if (index >= state.names.size() || state.names[index] != name) {
      throw ValueError("optimizer state does not match parameter " + name);
    }
    ++index;
  });
  if (index != state.names.size()) throw ValueError("optimizer state has extra entries");

  ++state.step;
  const double lr = config.learning_rate;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  index = 0;
  model.visit_parameters([&](const std::string& name, Tensor& t) {
    const std::size_t i = index++;
    if (!t.requires_grad()) return;
    if (!t.has_grad()) throw ValueError("missing gradient for parameter " + name);
    auto p = t.mutable_values();
    auto g = t.mutable_grad();
    if (state.kind == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    } else {
      auto& m = state.m[i];
      auto& v = state.v[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        p[j] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
      }
    }
    std::fill(g.begin(), g.end(), 0.0);
  });
}

double clip_gradients(CrossVit& model, double max_norm) {
  double sq = 0.0;
  model.visit_parameters([&](const std::string&, Tensor& t) {
    if (!t.has_grad()) return;
    for (double g : t.grad()) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    model.visit_parameters([&](const std::string&, Tensor& t) {
      if (!t.has_grad()) return;
      for (double& g : t.mutable_grad()) g *= factor;
    });
  }
  return norm;
}

namespace {

int argmax_row(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

EpochStats train_epoch(CrossVit& model, const std::vector<Sample>& samples, OptimizerState& opt,
                       const TrainConfig& config, Rng& rng) {
  if (samples.empty()) throw ValueError("train_epoch on an empty dataset");
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<Sample> shuffled;
  shuffled.reserve(samples.size());
  for (std::size_t i : order) shuffled.push_back(samples[i]);

  double loss_sum = 0.0;
  std::size_t correct = 0;
  const std::size_t k = model.config().num_classes;
  for (std::size_t begin = 0; begin < shuffled.size(); begin += config.batch_size) {
    const std::size_t end = std::min(shuffled.size(), begin + config.batch_size);
    auto [images, labels] = make_batch(shuffled, begin, end);
    model.zero_grad();
    Graph g;
    Var logits = model.forward(g, images, true, rng);
    Var loss = ops::cross_entropy(logits, labels);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw TrainingDiverged("non-finite loss " + std::to_string(value) + " at batch " +
                             std::to_string(begin / config.batch_size) + " (samples " +
                             std::to_string(begin) + ".." + std::to_string(end - 1) + ")");
    }
    g.backward(loss);
    clip_gradients(model, config.grad_clip);
    optimizer_step(model, opt, config);
    loss_sum += value * static_cast<double>(end - begin);
    const auto lv = logits.value().values();
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (argmax_row(lv.subspan(r * k, k)) == labels[r]) ++correct;
    }
  }
  EpochStats stats;
  stats.mean_loss = loss_sum / static_cast<double>(samples.size());
  stats.train_acc = static_cast<double>(correct) / static_cast<double>(samples.size());
  stats.wall_ms = elapsed_ms(start);
  return stats;
}

Predictions evaluate(CrossVit& model, const std::vector<Sample>& samples, std::size_t batch_size) {
  if (samples.empty()) throw ValueError("evaluate on an empty dataset");
  if (batch_size == 0) throw ValueError("evaluate: batch_size must be positive");
  Predictions out;
  const std::size_t k = model.config().num_classes;
  Rng unused(0);
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    auto [images, labels] = make_batch(samples, begin, end);
    Graph g(false);
    Var probs = ops::softmax_lastdim(model.forward(g, images, false, unused));
    const auto pv = probs.value().values();
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const auto row = pv.subspan(r * k, k);
      out.labels.push_back(labels[r]);
      out.predicted.push_back(argmax_row(row));
      out.scores.push_back(k > 1 ? row[1] : 0.0);
    }
  }
  return out;
}

double accuracy_of(const Predictions& p) {
  if (p.labels.empty()) throw ValueError("accuracy of an empty prediction set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.labels.size(); ++i) correct += p.labels[i] == p.predicted[i];
  return static_cast<double>(correct) / static_cast<double>(p.labels.size());
}

TrainState init_training(const RunConfig& config) {
  config.model.validate();
  config.train.validate();
  TrainState s;
  s.config = config;
  Rng init_rng(config.model.seed, 1);
  s.model = CrossVit::init(config.model, init_rng);
  s.optimizer = OptimizerState::init(s.model, config.train.optimizer);
  s.rng = Rng(config.train.seed, 2).state();
  return s;
}

std::string epoch_log_line(const EpochStats& stats) {
  nlohmann::ordered_json j;
  j["epoch"] = stats.epoch;
  j["mean_loss"] = stats.mean_loss;
  j["train_acc"] = stats.train_acc;
  j["val_acc"] = stats.val_acc;
  j["wall_ms"] = std::round(stats.wall_ms * 1000.0) / 1000.0;
  return j.dump();
}

std::vector<EpochStats> train(TrainState& state, const std::vector<Sample>& train_set,
                              const std::vector<Sample>& val, std::size_t until_epoch,
                              const EpochCallback& on_epoch) {
  const TrainConfig& cfg = state.config.train;
  std::ofstream log;
  if (!cfg.log_path.empty()) {
    const auto mode = state.epoch == 0 ? std::ios::trunc : std::ios::app;
    log.open(cfg.log_path, std::ios::out | mode);
    if (!log) throw Error("cannot open training log " + cfg.log_path);
  }
  std::vector<EpochStats> history;
  while (state.epoch < until_epoch) {
    Rng rng = Rng::from_state(state.rng);
    EpochStats stats = train_epoch(state.model, train_set, state.optimizer, cfg, rng);
    const auto start = std::chrono::steady_clock::now();
    if (!val.empty()) stats.val_acc = accuracy_of(evaluate(state.model, val));
    stats.wall_ms += elapsed_ms(start);
    state.rng = rng.state();
    stats.epoch = ++state.epoch;
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, state);
    if (log.is_open()) log << epoch_log_line(stats) << '\n' << std::flush;
    history.push_back(stats);
    if (on_epoch) on_epoch(stats, state);
  }
  return history;
}

}  // namespace scavit
