#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logitgov/backend.hpp"

namespace logitgov {

inline constexpr std::uint64_t kMaxCheckpointBytes = 32ull << 20;

// Snapshot of a session's KV state. The payload is always exactly
// position * bytes_per_position bytes.
struct KvCheckpoint {
  std::string model_name;
  std::uint32_t layer_count = 0;
  std::uint64_t bytes_per_position = 0;
  std::uint64_t position = 0;
  std::vector<std::byte> payload;

  bool operator==(const KvCheckpoint&) const = default;
};

std::optional<std::uint64_t> checked_mul(std::uint64_t a, std::uint64_t b);

// Throws SizeOverflow if the size product overflows, CheckpointTooLarge if it
// exceeds `cap`. Nothing is allocated before both checks pass.
KvCheckpoint kv_checkpoint(const Session& session,
                           std::uint64_t cap = kMaxCheckpointBytes);

// Same snapshot as kv_checkpoint; by convention the source session keeps
// running while the copy seeds another context.
KvCheckpoint kv_fork(const Session& session, std::uint64_t cap = kMaxCheckpointBytes);

// Throws DimensionMismatch naming the first differing identity field.
void kv_restore(Session& session, const KvCheckpoint& checkpoint,
                std::uint64_t cap = kMaxCheckpointBytes);

// "AKVC" file layout, little-endian:
//   magic[4] version:u16 name_len:u32 name layer_count:u32
//   bytes_per_position:u64 position:u64 payload crc32:u32
inline constexpr std::uint16_t kAkvcVersion = 1;

std::vector<std::byte> serialize_checkpoint(const KvCheckpoint& checkpoint);
KvCheckpoint parse_checkpoint(std::span<const std::byte> bytes,
                              std::uint64_t cap = kMaxCheckpointBytes);

void write_checkpoint_file(const std::filesystem::path& path,
                           const KvCheckpoint& checkpoint);
KvCheckpoint read_checkpoint_file(const std::filesystem::path& path,
                                  std::uint64_t cap = kMaxCheckpointBytes);

}  // namespace logitgov
