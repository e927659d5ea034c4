#include "scavit/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "scavit/checkpoint.hpp"
#include "scavit/config.hpp"
#include "scavit/data.hpp"
#include "scavit/errors.hpp"
#include "scavit/gradcheck.hpp"
#include "scavit/metrics.hpp"
#include "scavit/train.hpp"

namespace scavit {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string data;
  std::string out = ".";
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::size_t n = 400;
  std::size_t image_size = 32;
  double positive_fraction = 0.5;
  std::optional<std::size_t> epochs;
  bool resume = false;
  std::string split = "val";
};

RunConfig load_run_config(const Options& o) {
  RunConfig cfg =
      o.config.empty() ? RunConfig{ModelConfig::desk(), TrainConfig{}} : parse_config(o.config);
  if (o.seed) {
    cfg.model.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.epochs) cfg.train.epochs = *o.epochs;
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

int run_gen_data(const Options& o) {
  SyntheticSpec spec;
  spec.n_samples = o.n;
  spec.image_size = o.image_size;
  spec.positive_fraction = o.positive_fraction;
  spec.seed = o.seed.value_or(0);
  write_dataset(o.out, generate_synthetic(spec));
  std::cout << "wrote " << spec.n_samples << " samples to " << o.out << "\n";
  return 0;
}

int run_train(const Options& o) {
  if (o.data.empty()) throw ConfigError("train needs --data DIR");
  fs::create_directories(o.out);
  TrainState state;
  if (o.resume) {
    const fs::path ckpt =
        o.checkpoint.empty() ? fs::path(o.out) / "checkpoint.bin" : fs::path(o.checkpoint);
    state = load_checkpoint(ckpt);
    if (o.epochs) state.config.train.epochs = *o.epochs;
    state.config.train.checkpoint_path = ckpt.string();
    if (state.config.train.log_path.empty()) {
      state.config.train.log_path = (fs::path(o.out) / "train_log.jsonl").string();
    }
  } else {
    RunConfig cfg = load_run_config(o);
    if (!o.checkpoint.empty()) {
      cfg.train.checkpoint_path = o.checkpoint;
    } else if (cfg.train.checkpoint_path.empty()) {
      cfg.train.checkpoint_path = (fs::path(o.out) / "checkpoint.bin").string();
    }
    if (cfg.train.log_path.empty()) {
      cfg.train.log_path = (fs::path(o.out) / "train_log.jsonl").string();
    }
    state = init_training(cfg);
  }
  const Dataset ds = load_dataset(o.data, state.config.model.image_size);
  auto [train_set, val_set] =
      split(ds.samples, state.config.train.val_fraction, state.config.train.seed);
  std::cout << "training on " << train_set.size() << " samples, validating on " << val_set.size()
            << ", " << state.model.parameter_count() << " parameters\n";
  train(state, train_set, val_set, state.config.train.epochs,
        [](const EpochStats& s, const TrainState&) { std::cout << epoch_log_line(s) << "\n"; });
  std::cout << "checkpoint: " << state.config.train.checkpoint_path << "\n";
  return 0;
}

int run_eval(const Options& o, bool with_roc) {
  if (o.data.empty()) throw ConfigError("eval needs --data DIR");
  if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint PATH");
  TrainState state = load_checkpoint(o.checkpoint);
  const Dataset ds = load_dataset(o.data, state.config.model.image_size);
  std::vector<Sample> samples;
  if (o.split == "all") {
    samples = ds.samples;
  } else {
    auto parts = split(ds.samples, state.config.train.val_fraction, state.config.train.seed);
    samples = o.split == "val" ? std::move(parts.second) : std::move(parts.first);
  }
  const Predictions p = evaluate(state.model, samples);
  const MetricsReport report = make_report(p.predicted, p.labels, p.scores);
  fs::create_directories(o.out);
  const std::string json = report_json(report);
  write_text(fs::path(o.out) / "metrics.json", json);
  std::cout << json;
  if (with_roc) {
    write_text(fs::path(o.out) / "roc.csv", roc_csv(roc_curve(p.scores, p.labels)));
    std::cout << "roc: " << (fs::path(o.out) / "roc.csv").string() << "\n";
  }
  return 0;
}

int run_gradcheck(const Options& o) {
  RunConfig cfg = load_run_config(o);
  Rng rng(cfg.model.seed, 1);
  CrossVit model = CrossVit::init(cfg.model, rng);
  SyntheticSpec spec;
  spec.image_size = cfg.model.image_size;
  spec.seed = cfg.model.seed;
  const Sample sample = render_synthetic(spec, 0, true);
  const GradcheckOptions options;
  const GradcheckReport r = gradcheck(model, sample.image, sample.label, options);
  std::cout << "checked " << r.checked << " parameters in " << r.seconds << " s\n"
            << "max relative error: " << r.max_rel_error << " at " << r.worst_parameter << "["
            << r.worst_index << "] (backward " << r.worst_analytic << ", numeric "
            << r.worst_numeric << ")\n"
            << (r.passed(options) ? "PASS" : "FAIL") << " (tolerance " << options.tolerance
            << ")\n";
  return r.passed(options) ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Dual-branch vision transformer with selective cross-attention fusion", "scavit"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (PGM + labels.csv)");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--n", o.n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--image-size", o.image_size, "Image side length")->check(CLI::PositiveNumber);
  gen->add_option("--positive-fraction", o.positive_fraction, "Fraction of tumor samples")
      ->check(CLI::Range(0.0, 1.0));

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint + log");
  tr->add_option("--config", o.config, "Config file (desk preset when omitted)");
  tr->add_option("--data", o.data, "Dataset directory")->required();
  tr->add_option("--out", o.out, "Output directory");
  tr->add_option("--checkpoint", o.checkpoint, "Checkpoint path");
  tr->add_option("--seed", o.seed, "Overrides model and training seeds");
  tr->add_option("--epochs", o.epochs, "Overrides the configured epoch count");
  tr->add_flag("--resume", o.resume, "Continue from the checkpoint");

  CLI::App* evals[2];
  for (int i = 0; i < 2; ++i) {
    auto* ev =
        app.add_subcommand(i == 0 ? "eval" : "roc", i == 0 ? "Write metrics JSON for a checkpoint"
                                                           : "Write metrics JSON and the ROC CSV");
    ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path")->required();
    ev->add_option("--data", o.data, "Dataset directory")->required();
    ev->add_option("--out", o.out, "Output directory");
    ev->add_option("--split", o.split, "Which samples to score")
        ->check(CLI::IsMember({"val", "train", "all"}));
    evals[i] = ev;
  }

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc->add_option("--config", o.config, "Config file (desk preset when omitted)");
  gc->add_option("--seed", o.seed, "Model seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen_data(o);
    if (tr->parsed()) return run_train(o);
    if (evals[0]->parsed()) return run_eval(o, false);
    if (evals[1]->parsed()) return run_eval(o, true);
    if (gc->parsed()) return run_gradcheck(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace scavit
