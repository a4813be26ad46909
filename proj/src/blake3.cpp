#include "logitgov/blake3.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace logitgov {

namespace {

constexpr std::uint32_t kIv[8] = {0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
                                  0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19};
constexpr std::size_t kPermutation[16] = {2, 6, 3, 10, 7, 0, 4, 13,
                                          1, 11, 12, 5, 9, 14, 15, 8};
constexpr std::size_t kBlockLen = 64;
constexpr std::size_t kChunkLen = 1024;

constexpr std::uint32_t kChunkStart = 1u << 0;
constexpr std::uint32_t kChunkEnd = 1u << 1;
constexpr std::uint32_t kParent = 1u << 2;
constexpr std::uint32_t kRoot = 1u << 3;

using Words8 = std::array<std::uint32_t, 8>;
using Words16 = std::array<std::uint32_t, 16>;

inline void g(Words16& s, std::size_t a, std::size_t b, std::size_t c, std::size_t d,
              std::uint32_t mx, std::uint32_t my) {
  s[a] = s[a] + s[b] + mx;
  s[d] = std::rotr(s[d] ^ s[a], 16);
  s[c] = s[c] + s[d];
  s[b] = std::rotr(s[b] ^ s[c], 12);
  s[a] = s[a] + s[b] + my;
  s[d] = std::rotr(s[d] ^ s[a], 8);
  s[c] = s[c] + s[d];
  s[b] = std::rotr(s[b] ^ s[c], 7);
}

inline void round_fn(Words16& s, const Words16& m) {
  g(s, 0, 4, 8, 12, m[0], m[1]);
  g(s, 1, 5, 9, 13, m[2], m[3]);
  g(s, 2, 6, 10, 14, m[4], m[5]);
  g(s, 3, 7, 11, 15, m[6], m[7]);
  g(s, 0, 5, 10, 15, m[8], m[9]);
  g(s, 1, 6, 11, 12, m[10], m[11]);
  g(s, 2, 7, 8, 13, m[12], m[13]);
  g(s, 3, 4, 9, 14, m[14], m[15]);
}

Words16 compress(const Words8& cv, const Words16& block, std::uint64_t counter,
                 std::uint32_t block_len, std::uint32_t flags) {
  Words16 s = {cv[0], cv[1], cv[2], cv[3], cv[4], cv[5], cv[6], cv[7],
               kIv[0], kIv[1], kIv[2], kIv[3],
               static_cast<std::uint32_t>(counter),
               static_cast<std::uint32_t>(counter >> 32), block_len, flags};
  Words16 m = block;
  for (int r = 0; r < 7; ++r) {
    round_fn(s, m);
    if (r < 6) {
      Words16 permuted;
      for (std::size_t i = 0; i < 16; ++i) permuted[i] = m[kPermutation[i]];
      m = permuted;
    }
  }
  for (std::size_t i = 0; i < 8; ++i) {
    s[i] ^= s[i + 8];
    s[i + 8] ^= cv[i];
  }
  return s;
}

Words16 load_block(const std::uint8_t* bytes) {
  Words16 w;
  for (std::size_t i = 0; i < 16; ++i) {
    w[i] = static_cast<std::uint32_t>(bytes[4 * i]) |
           static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
           static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
           static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
  }
  return w;
}

Words8 first8(const Words16& w) {
  Words8 out;
  std::copy_n(w.begin(), 8, out.begin());
  return out;
}

struct Output {
  Words8 input_cv;
  Words16 block;
  std::uint64_t counter;
  std::uint32_t block_len;
  std::uint32_t flags;

  Words8 chaining_value() const {
    return first8(compress(input_cv, block, counter, block_len, flags));
  }

  Hash256 root_hash() const {
    const Words16 w = compress(input_cv, block, 0, block_len, flags | kRoot);
    Hash256 out;
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t b = 0; b < 4; ++b) {
        out[4 * i + b] = static_cast<std::uint8_t>(w[i] >> (8 * b));
      }
    }
    return out;
  }
};

Output parent_output(const Words8& left, const Words8& right) {
  Words16 block;
  std::copy(left.begin(), left.end(), block.begin());
  std::copy(right.begin(), right.end(), block.begin() + 8);
  Words8 key;
  std::copy(std::begin(kIv), std::end(kIv), key.begin());
  return {key, block, 0, kBlockLen, kParent};
}

}  // namespace

Blake3::Blake3() { std::copy(std::begin(kIv), std::end(kIv), chunk_.cv.begin()); }

void Blake3::push_chunk_cv(std::array<std::uint32_t, 8> cv, std::uint64_t total_chunks) {
  // Merge completed subtrees: one merge per trailing zero bit of the count.
  while ((total_chunks & 1) == 0) {
    cv = parent_output(cv_stack_.back(), cv).chaining_value();
    cv_stack_.pop_back();
    total_chunks >>= 1;
  }
  cv_stack_.push_back(cv);
}

Blake3& Blake3::update(std::span<const std::uint8_t> input) {
  while (!input.empty()) {
    if (chunk_.len() == kChunkLen) {
      const std::uint32_t start = chunk_.blocks_compressed == 0 ? kChunkStart : 0;
      const Output out{chunk_.cv, load_block(chunk_.block.data()), chunk_.chunk_counter,
                       static_cast<std::uint32_t>(chunk_.block_len),
                       start | kChunkEnd};
      const std::uint64_t total = chunk_.chunk_counter + 1;
      push_chunk_cv(out.chaining_value(), total);
      chunk_ = ChunkState{};
      std::copy(std::begin(kIv), std::end(kIv), chunk_.cv.begin());
      chunk_.chunk_counter = total;
    }
    // Compress a full block only once more input is known to follow it.
    if (chunk_.block_len == kBlockLen) {
      const std::uint32_t start = chunk_.blocks_compressed == 0 ? kChunkStart : 0;
      chunk_.cv = first8(compress(chunk_.cv, load_block(chunk_.block.data()),
                                  chunk_.chunk_counter, kBlockLen, start));
      ++chunk_.blocks_compressed;
      chunk_.block.fill(0);
      chunk_.block_len = 0;
    }
    const std::size_t want = std::min(kChunkLen - chunk_.len(), input.size());
    const std::size_t take = std::min(kBlockLen - chunk_.block_len, want);
    std::memcpy(chunk_.block.data() + chunk_.block_len, input.data(), take);
    chunk_.block_len += take;
    input = input.subspan(take);
  }
  return *this;
}

Blake3& Blake3::update(std::string_view input) {
  return update(std::span(reinterpret_cast<const std::uint8_t*>(input.data()),
                          input.size()));
}

Hash256 Blake3::finalize() const {
  const std::uint32_t start = chunk_.blocks_compressed == 0 ? kChunkStart : 0;
  Output out{chunk_.cv, load_block(chunk_.block.data()), chunk_.chunk_counter,
             static_cast<std::uint32_t>(chunk_.block_len), start | kChunkEnd};
  for (auto it = cv_stack_.rbegin(); it != cv_stack_.rend(); ++it) {
    out = parent_output(*it, out.chaining_value());
  }
  return out.root_hash();
}

Hash256 Blake3::hash(std::span<const std::uint8_t> input) {
  return Blake3().update(input).finalize();
}

Hash256 Blake3::hash(std::string_view input) { return Blake3().update(input).finalize(); }

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

bool from_hex(std::string_view hex, std::span<std::uint8_t> out) {
  if (hex.size() != out.size() * 2) return false;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]);
    const int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return false;
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return true;
}

}  // namespace logitgov
