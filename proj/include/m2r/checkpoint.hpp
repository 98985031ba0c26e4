#pragma once
// Versioned little-endian container of named float64 tensors.
//
//   magic "M2RCKPT\0" | u32 version | u64 meta length | meta bytes
//   u64 entry count | per entry: u64 name length, name, u32 kind (0 parameter,
//   1 buffer), u32 rank, u64 dims[rank], u64 payload offset
//   payload: f64 values, entries back to back, offsets relative to its start

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "m2r/network.hpp"

namespace m2r {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes every parameter and buffer of the model; the model config goes in
/// the meta string.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Rebuilds the model from the stored config and copies the stored values
/// in. Throws IoError on unreadable files and CodecError on malformed ones.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

/// Copies values into an existing model; names and shapes must match.
void load_checkpoint_into(Model& model, const std::filesystem::path& path);

}  // namespace m2r
