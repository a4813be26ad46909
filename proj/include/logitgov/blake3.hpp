#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logitgov {

using Hash256 = std::array<std::uint8_t, 32>;

// Portable BLAKE3 (unkeyed hash mode, 32-byte output).
class Blake3 {
 public:
  Blake3();

  Blake3& update(std::span<const std::uint8_t> input);
  Blake3& update(std::string_view input);
  Hash256 finalize() const;

  static Hash256 hash(std::span<const std::uint8_t> input);
  static Hash256 hash(std::string_view input);

 private:
  struct ChunkState {
    std::array<std::uint32_t, 8> cv;
    std::uint64_t chunk_counter = 0;
    std::array<std::uint8_t, 64> block{};
    std::size_t block_len = 0;
    std::size_t blocks_compressed = 0;

    std::size_t len() const { return 64 * blocks_compressed + block_len; }
  };

  void push_chunk_cv(std::array<std::uint32_t, 8> cv, std::uint64_t total_chunks);

  ChunkState chunk_;
  std::vector<std::array<std::uint32_t, 8>> cv_stack_;
};

std::string to_hex(std::span<const std::uint8_t> bytes);
// Lowercase hex only; returns false on any other input.
bool from_hex(std::string_view hex, std::span<std::uint8_t> out);

}  // namespace logitgov
