#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "scenario_rag/embedding.hpp"

namespace scenario_rag {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  EncoderParams params;
};

// Little-endian "SAEM" file: version, the ModelConfig fields as u32, tensor
// count, then per tensor (name length, name, rank, dims, f32 row-major data).
// Values are stored as f32, so a reload rounds parameters to single precision.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws Error{kIo}, Error{kVersionMismatch} (magic or version),
// Error{kCorruptFile} with the byte offset of the problem.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 of the file bytes as 16 lowercase hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace scenario_rag
