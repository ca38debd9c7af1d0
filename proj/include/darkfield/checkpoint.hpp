#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "darkfield/network.hpp"

namespace darkfield {

inline constexpr const char* kCheckpointMagic = "DFCKPT01";
inline constexpr int kCheckpointFormatVersion = 1;

/// Header contents of a model file, available without touching the weights.
struct CheckpointMeta {
    int format_version = kCheckpointFormatVersion;
    NetConfig net;
    nlohmann::json config_echo;  // run settings recorded for provenance
    uint64_t param_checksum = 0;
};

nlohmann::json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

/// Writes magic, a JSON header (format version, architecture, tensor index,
/// config echo, checksum), then the raw parameter values in index order.
void save_checkpoint(const std::string& path, ProgressiveGenerator& gen,
                     const nlohmann::json& config_echo);

/// Reads only the header. Throws std::runtime_error on bad magic or an
/// unknown format version.
CheckpointMeta read_checkpoint_meta(const std::string& path);

/// Rebuilds the generator from the stored architecture and loads every
/// tensor, validating names, sizes, and the parameter checksum.
ProgressiveGenerator load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace darkfield
