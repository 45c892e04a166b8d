#ifndef SSIN_CHECKPOINT_HPP
#define SSIN_CHECKPOINT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssin/geom.hpp"
#include "ssin/spaformer.hpp"

namespace ssin::model {

inline constexpr char kCheckpointMagic[8] = {'S', 'S', 'I', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Global standardization moments from the training roster; stored with the
// weights so inference needs nothing else.
struct StandardizationStats {
    geom::RelPosStats relpos;
    geom::CoordStats coords;
};

struct Checkpoint {
    ModelConfig config;
    StandardizationStats stats;
    ModelParams params;
    nlohmann::json metadata = nlohmann::json::object();  // provenance: run config, input checksums
};

// Little-endian layout:
//   magic[8] | u32 version | u32 n + config JSON | 8 x f64 stats |
//   u32 n + metadata JSON | u32 count | count x (u16 n + name | u32 rows |
//   u32 cols | rows*cols f64, row-major) | u64 FNV-1a of all preceding bytes
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
// Throws ChecksumError, VersionError or ShapeError.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
// Loads and requires the stored configuration to match `expected`.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace ssin::model

#endif  // SSIN_CHECKPOINT_HPP
