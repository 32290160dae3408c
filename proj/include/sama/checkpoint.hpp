#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sama/nn.hpp"

namespace sama {

// Binary layout, little-endian:
//   "SAMACKPT" u32 version
//   u64 config length, config JSON bytes
//   u64 step
//   u64 parameter count, then per parameter:
//     u32 name length, name, u8 trainable, u32 ndim, u64 dims[ndim], f64 values
//   u8 has optimizer; if set: u64 entry count, then per entry:
//     u32 name length, name, u64 update count, f64 m[numel], f64 v[numel]

inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'M', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParamRecord {
    std::string name;
    bool trainable = false;
    Shape shape;
    std::vector<double> values;
};

struct AdamMoments {
    std::string name;
    std::uint64_t updates = 0;
    std::vector<double> m, v;
};

struct Checkpoint {
    std::string config_json;
    std::uint64_t step = 0;
    std::vector<ParamRecord> params;
    std::optional<std::vector<AdamMoments>> optimizer;
};

Checkpoint snapshot(const ParamStore& store, std::string config_json, std::uint64_t step);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every record into the store. Names, shapes and trainable flags must
// match exactly; a missing or extra parameter is a CheckpointError.
void restore(ParamStore& store, const Checkpoint& ckpt);

// Raw bytes of the named parameters (in store order) whose names start with
// any of `prefixes`; used to compare parameter state byte for byte.
std::string serialize_params(const ParamStore& store, const std::vector<std::string>& prefixes);

}  // namespace sama
