#pragma once

#include <filesystem>
#include <string>

#include "scavit/train.hpp"

namespace scavit {

inline constexpr char kCheckpointMagic[] = "SCAVIT01";
inline constexpr int kCheckpointVersion = 1;

/// Layout: the 8 magic bytes, a little-endian u64 header length, the JSON
/// header (config, parameter manifest, optimizer manifest, epoch, rng
/// state), then little-endian float64 data in manifest order.
std::string encode_checkpoint(const TrainState& state);
TrainState decode_checkpoint(const std::string& bytes);

/// Written through a temporary file and renamed, so a crash never leaves a
/// half-written checkpoint at `path`.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace scavit
