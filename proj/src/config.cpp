#include "scavit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "scavit/errors.hpp"

namespace scavit {

std::string to_string(LayerDropMode mode) {
  return mode == LayerDropMode::constant ? "constant" : "linear_schedule";
}
std::string to_string(FusionDirection direction) {
  return direction == FusionDirection::l_to_s ? "l_to_s" : "bidirectional";
}
std::string to_string(FusionKind kind) {
  return kind == FusionKind::selective ? "selective" : "plain";
}
std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

namespace {

void require(bool ok, const std::string& invariant) {
  if (!ok) throw ConfigError("config invariant violated: " + invariant);
}

}  // namespace

void ModelConfig::validate() const {
  require(image_size > 0 && s_patch > 0 && l_patch > 0, "image and patch sizes are positive");
  require(image_size % s_patch == 0, "image_size divisible by s_patch (" +
                                         std::to_string(image_size) + " % " +
                                         std::to_string(s_patch) + " != 0)");
  require(image_size % l_patch == 0, "image_size divisible by l_patch (" +
                                         std::to_string(image_size) + " % " +
                                         std::to_string(l_patch) + " != 0)");
  require(l_patch > s_patch, "l_patch > s_patch");
  require(heads > 0, "heads is positive");
  require(dim_s > 0 && dim_s % heads == 0, "dim divisible by heads (dim_s " +
                                               std::to_string(dim_s) + " % heads " +
                                               std::to_string(heads) + " != 0)");
  require(dim_l > 0 && dim_l % heads == 0, "dim divisible by heads (dim_l " +
                                               std::to_string(dim_l) + " % heads " +
                                               std::to_string(heads) + " != 0)");
  require(dim_s >= 2 && dim_l >= 2, "embedding dims are at least 2");
  require(mlp_dim > 0, "mlp_dim is positive");
  require(cls_depth > 0, "cls_depth is positive");
  require(dropout_p >= 0.0 && dropout_p < 1.0, "0 <= dropout < 1");
  require(emb_dropout_p >= 0.0 && emb_dropout_p < 1.0, "0 <= emb_dropout < 1");
  require(layer_drop_p >= 0.0 && layer_drop_p < 1.0, "0 <= layer_drop_p < 1");
  require(keep_ratio > 0.0 && keep_ratio <= 1.0, "0 < keep_ratio <= 1");
  require(num_classes >= 2, "num_classes >= 2");
}

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.image_size = 32;
  c.s_patch = 4;
  c.l_patch = 8;
  c.dim_s = 32;
  c.dim_l = 32;
  c.depth = 2;
  c.cls_depth = 1;
  c.heads = 4;
  c.mlp_dim = 64;
  c.keep_ratio = 0.5;
  return c;
}

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "learning_rate >= 0");
  require(batch_size > 0, "batch_size is positive");
  require(val_fraction > 0.0 && val_fraction < 1.0, "0 < val_fraction < 1");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "0 <= adam_beta1 < 1");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "0 <= adam_beta2 < 1");
  require(adam_eps > 0.0, "adam_eps > 0");
  require(grad_clip >= 0.0, "grad_clip >= 0");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  double out = 0.0;
  is >> out;
  if (is.fail() || !is.eof()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto count = [&t](const char* key, auto member) {
      t[key] = [member](RunConfig& c, const std::string& k, const std::string& v) {
        member(c) = parse_count(k, v);
      };
    };
    auto real = [&t](const char* key, auto member) {
      t[key] = [member](RunConfig& c, const std::string& k, const std::string& v) {
        member(c) = parse_real(k, v);
      };
    };
    count("image_size", [](RunConfig& c) -> std::size_t& { return c.model.image_size; });
    count("s_patch", [](RunConfig& c) -> std::size_t& { return c.model.s_patch; });
    count("l_patch", [](RunConfig& c) -> std::size_t& { return c.model.l_patch; });
    count("dim_s", [](RunConfig& c) -> std::size_t& { return c.model.dim_s; });
    count("dim_l", [](RunConfig& c) -> std::size_t& { return c.model.dim_l; });
    count("depth", [](RunConfig& c) -> std::size_t& { return c.model.depth; });
    count("cls_depth", [](RunConfig& c) -> std::size_t& { return c.model.cls_depth; });
    count("heads", [](RunConfig& c) -> std::size_t& { return c.model.heads; });
    count("mlp_dim", [](RunConfig& c) -> std::size_t& { return c.model.mlp_dim; });
    count("num_classes", [](RunConfig& c) -> std::size_t& { return c.model.num_classes; });
    count("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    count("batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    real("dropout", [](RunConfig& c) -> double& { return c.model.dropout_p; });
    real("emb_dropout", [](RunConfig& c) -> double& { return c.model.emb_dropout_p; });
    real("layer_drop", [](RunConfig& c) -> double& { return c.model.layer_drop_p; });
    real("keep_ratio", [](RunConfig& c) -> double& { return c.model.keep_ratio; });
    real("learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; });
    real("adam_beta1", [](RunConfig& c) -> double& { return c.train.adam_beta1; });
    real("adam_beta2", [](RunConfig& c) -> double& { return c.train.adam_beta2; });
    real("adam_eps", [](RunConfig& c) -> double& { return c.train.adam_eps; });
    real("grad_clip", [](RunConfig& c) -> double& { return c.train.grad_clip; });
    real("val_fraction", [](RunConfig& c) -> double& { return c.train.val_fraction; });

    // `dim` sets both branch widths.
    t["dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.dim_s = c.model.dim_l = parse_count(k, v);
    };
    t["patch"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.s_patch = parse_count(k, v);
      c.model.l_patch = 2 * c.model.s_patch;
    };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.seed = c.train.seed = parse_count(k, v);
    };
    t["model_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.seed = parse_count(k, v);
    };
    t["train_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.seed = parse_count(k, v);
    };
    t["layer_drop_mode"] = [](RunConfig& c, const std::string&, const std::string& v) {
      if (v == "constant") {
        c.model.layer_drop_mode = LayerDropMode::constant;
      } else if (v == "linear_schedule") {
        c.model.layer_drop_mode = LayerDropMode::linear_schedule;
      } else {
        throw ConfigError("layer_drop_mode must be constant or linear_schedule, got '" + v + "'");
      }
    };
    t["calibration"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.calibration_mode = parse_calibration_mode(v);
    };
    t["relevance"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.relevance_mode = parse_relevance_mode(v);
    };
    t["fusion_direction"] = [](RunConfig& c, const std::string&, const std::string& v) {
      if (v == "l_to_s") {
        c.model.fusion_direction = FusionDirection::l_to_s;
      } else if (v == "bidirectional") {
        c.model.fusion_direction = FusionDirection::bidirectional;
      } else {
        throw ConfigError("fusion_direction must be l_to_s or bidirectional, got '" + v + "'");
      }
    };
    t["fusion"] = [](RunConfig& c, const std::string&, const std::string& v) {
      if (v == "selective") {
        c.model.fusion_kind = FusionKind::selective;
      } else if (v == "plain") {
        c.model.fusion_kind = FusionKind::plain;
      } else {
        throw ConfigError("fusion must be selective or plain, got '" + v + "'");
      }
    };
    t["optimizer"] = [](RunConfig& c, const std::string&, const std::string& v) {
      if (v == "sgd") {
        c.train.optimizer = OptimizerKind::sgd;
      } else if (v == "adam") {
        c.train.optimizer = OptimizerKind::adam;
      } else {
        throw ConfigError("optimizer must be sgd or adam, got '" + v + "'");
      }
    };
    t["checkpoint_path"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.train.checkpoint_path = v;
    };
    t["log_path"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.train.log_path = v;
    };
    return t;
  }();
  return table;
}

struct Entry {
  std::size_t line;
  std::string key;
  std::string value;
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::vector<Entry> entries;
  std::string preset = "full";
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    Entry e{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key == "preset") {
      if (e.value != "desk" && e.value != "full") {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown preset '" + e.value +
                          "' (expected desk or full)");
      }
      preset = e.value;
      continue;
    }
    if (!setters().contains(e.key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + e.key + "'");
    }
    entries.push_back(std::move(e));
  }

  RunConfig config;
  config.model = preset == "desk" ? ModelConfig::desk() : ModelConfig::full_scale();
  for (const Entry& e : entries) {
    try {
      setters().at(e.key)(config, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  config.model.validate();
  config.train.validate();
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

std::string real_text(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

std::string serialize_config(const RunConfig& config) {
  const ModelConfig& m = config.model;
  const TrainConfig& t = config.train;
  std::ostringstream os;
  os << "# model\n"
     << "image_size = " << m.image_size << "\n"
     << "s_patch = " << m.s_patch << "\n"
     << "l_patch = " << m.l_patch << "\n"
     << "dim_s = " << m.dim_s << "\n"
     << "dim_l = " << m.dim_l << "\n"
     << "depth = " << m.depth << "\n"
     << "cls_depth = " << m.cls_depth << "\n"
     << "heads = " << m.heads << "\n"
     << "mlp_dim = " << m.mlp_dim << "\n"
     << "dropout = " << real_text(m.dropout_p) << "\n"
     << "emb_dropout = " << real_text(m.emb_dropout_p) << "\n"
     << "layer_drop = " << real_text(m.layer_drop_p) << "\n"
     << "layer_drop_mode = " << to_string(m.layer_drop_mode) << "\n"
     << "keep_ratio = " << real_text(m.keep_ratio) << "\n"
     << "calibration = " << to_string(m.calibration_mode) << "\n"
     << "relevance = " << to_string(m.relevance_mode) << "\n"
     << "fusion_direction = " << to_string(m.fusion_direction) << "\n"
     << "fusion = " << to_string(m.fusion_kind) << "\n"
     << "num_classes = " << m.num_classes << "\n"
     << "model_seed = " << m.seed << "\n"
     << "# training\n"
     << "learning_rate = " << real_text(t.learning_rate) << "\n"
     << "epochs = " << t.epochs << "\n"
     << "batch_size = " << t.batch_size << "\n"
     << "optimizer = " << to_string(t.optimizer) << "\n"
     << "adam_beta1 = " << real_text(t.adam_beta1) << "\n"
     << "adam_beta2 = " << real_text(t.adam_beta2) << "\n"
     << "adam_eps = " << real_text(t.adam_eps) << "\n"
     << "grad_clip = " << real_text(t.grad_clip) << "\n"
     << "val_fraction = " << real_text(t.val_fraction) << "\n"
     << "train_seed = " << t.seed << "\n";
  if (!t.checkpoint_path.empty()) os << "checkpoint_path = " << t.checkpoint_path << "\n";
  if (!t.log_path.empty()) os << "log_path = " << t.log_path << "\n";
  return os.str();
}

}  // namespace scavit
