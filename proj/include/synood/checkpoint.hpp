#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "synood/nn.hpp"

namespace synood {

// Single-file checkpoint container: magic + version header, a JSON metadata
// blob, then the named parameter arrays in store order. Round-trips are
// bit-exact (doubles are written raw, little-endian).
inline constexpr char kCheckpointMagic[8] = {'S', 'N', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta);

// Fills `params` in place; every store entry must be present in the file with
// a matching shape, and the file must not carry extra arrays. Returns the
// metadata blob.
nlohmann::json load_checkpoint(const std::string& path, ParamStore& params);

// Reads only the metadata without touching any model.
nlohmann::json read_checkpoint_meta(const std::string& path);

}  // namespace synood
