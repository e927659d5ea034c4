#include "scavit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "scavit/errors.hpp"

namespace scavit {

namespace {

using json = nlohmann::ordered_json;

constexpr std::size_t kMagicSize = 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_doubles(std::string& out, std::span<const double> values) {
  for (double d : values) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

void get_doubles(const std::string& in, std::size_t pos, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(get_u64(in, pos + 8 * i));
  }
}

}  // namespace

std::string encode_checkpoint(const TrainState& state) {
  json params = json::array();
  std::string data;
  state.model.visit_parameters([&](const std::string& name, const Tensor& t) {
    params.push_back(
        {{"name", name}, {"shape", t.shape()}, {"offset", data.size()}, {"count", t.numel()}});
    put_doubles(data, t.values());
  });
  const OptimizerState& opt = state.optimizer;
  json moments = json::array();
  for (std::size_t i = 0; i < opt.m.size(); ++i) {
    json entry = {{"name", opt.names.at(i)}, {"m_offset", data.size()}};
    put_doubles(data, opt.m[i]);
    entry["v_offset"] = data.size();
    put_doubles(data, opt.v.at(i));
    entry["count"] = opt.m[i].size();
    moments.push_back(std::move(entry));
  }
  json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = serialize_config(state.config);
  header["epoch"] = state.epoch;
  header["rng"] = {{"key", state.rng.key}, {"counter", state.rng.counter}};
  header["parameters"] = std::move(params);
  header["optimizer"] = {{"kind", to_string(opt.kind)},
                         {"step", opt.step},
                         {"names", opt.names},
                         {"moments", std::move(moments)}};
  header["data_bytes"] = data.size();
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, kMagicSize);
  put_u64(out, text.size());
  out += text;
  out += data;
  return out;
}

TrainState decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicSize || bytes.compare(0, kMagicSize, kCheckpointMagic) != 0) {
    throw CheckpointError("not a checkpoint: bad magic bytes");
  }
  if (bytes.size() < kMagicSize + 8) throw CheckpointError("checkpoint truncated in header");
  const std::uint64_t header_len = get_u64(bytes, kMagicSize);
  const std::size_t data_start = kMagicSize + 8 + header_len;
  if (header_len > bytes.size() || data_start > bytes.size()) {
    throw CheckpointError("checkpoint truncated in header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(kMagicSize + 8, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  TrainState s;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) +
                            ")");
    }
    const auto data_bytes = header.at("data_bytes").get<std::size_t>();
    if (bytes.size() - data_start < data_bytes) {
      throw CheckpointError("checkpoint truncated: " + std::to_string(bytes.size() - data_start) +
                            " of " + std::to_string(data_bytes) + " data bytes present");
    }
    if (bytes.size() - data_start > data_bytes) {
      throw CheckpointError("checkpoint has trailing bytes after the data section");
    }
    auto read_block = [&](std::size_t offset, std::span<double> out) {
      if (offset % 8 != 0 || offset > data_bytes || out.size() > (data_bytes - offset) / 8) {
        throw CheckpointError("manifest offset " + std::to_string(offset) +
                              " outside the data section");
      }
      get_doubles(bytes, data_start + offset, out);
    };

    try {
      s.config = parse_config_text(header.at("config").get<std::string>());
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
    }
    s.epoch = header.at("epoch").get<std::size_t>();
    s.rng.key = header.at("rng").at("key").get<std::uint64_t>();
    s.rng.counter = header.at("rng").at("counter").get<std::uint64_t>();

    Rng scratch(0);
    s.model = CrossVit::init(s.config.model, scratch);
    const json& params = header.at("parameters");
    std::size_t index = 0;
    s.model.visit_parameters([&](const std::string& name, Tensor& t) {
      if (index >= params.size()) throw CheckpointError("checkpoint lacks parameter " + name);
      const json& entry = params[index++];
      if (entry.at("name").get<std::string>() != name) {
        throw CheckpointError("manifest entry " + entry.at("name").get<std::string>() + " where " +
                              name + " was expected");
      }
      const auto shape = entry.at("shape").get<Shape>();
      if (shape != t.shape()) {
        throw CheckpointError("shape mismatch for " + name + ": checkpoint " +
                              shape_to_string(shape) + ", model " + shape_to_string(t.shape()));
      }
      read_block(entry.at("offset").get<std::size_t>(), t.mutable_values());
    });
    if (index != params.size()) throw CheckpointError("checkpoint has unknown extra parameters");

    const json& opt = header.at("optimizer");
    const std::string kind = opt.at("kind").get<std::string>();
    if (kind != "adam" && kind != "sgd") throw CheckpointError("unknown optimizer " + kind);
    s.optimizer =
        OptimizerState::init(s.model, kind == "adam" ? OptimizerKind::adam : OptimizerKind::sgd);
    s.optimizer.step = opt.at("step").get<std::uint64_t>();
    if (opt.at("names").get<std::vector<std::string>>() != s.optimizer.names) {
      throw CheckpointError("optimizer manifest does not match the model parameters");
    }
    const json& moments = opt.at("moments");
    if (moments.size() != s.optimizer.m.size()) {
      throw CheckpointError("optimizer moment count mismatch");
    }
    for (std::size_t i = 0; i < moments.size(); ++i) {
      const json& entry = moments[i];
      if (entry.at("count").get<std::size_t>() != s.optimizer.m[i].size()) {
        throw CheckpointError("optimizer moment shape mismatch for " + s.optimizer.names[i]);
      }
      read_block(entry.at("m_offset").get<std::size_t>(), s.optimizer.m[i]);
      read_block(entry.at("v_offset").get<std::size_t>(), s.optimizer.v[i]);
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const std::string bytes = encode_checkpoint(state);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace scavit
