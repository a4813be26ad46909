#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "logitgov/blake3.hpp"

namespace logitgov {

enum class Decision : std::uint8_t { Block = 0, Warn = 1, Log = 2, Allow = 3 };

std::string_view decision_name(Decision d);
std::optional<Decision> parse_decision(std::string_view name);

// What the governance layer hands to the log.
struct AuditRecord {
  Hash256 action_digest{};
  Decision decision = Decision::Block;
  double p_harmful = 0.0;
  std::string stage;
  std::string note;
};

struct AuditEntry {
  std::uint64_t sequence_number = 0;
  std::int64_t timestamp_ms = 0;
  Hash256 action_digest{};
  Decision decision = Decision::Block;
  double p_harmful = 0.0;
  std::string stage;
  std::string note;
  Hash256 prev_hash{};
  Hash256 entry_hash{};

  bool operator==(const AuditEntry&) const = default;
};

// BLAKE3 over the canonical encoding: seq u64, timestamp i64, digest[32],
// decision u8, p_harmful f64 bits, stage and note as u32-length-prefixed
// bytes, then prev_hash[32]. All integers little-endian.
Hash256 compute_entry_hash(const AuditEntry& entry);
std::vector<std::uint8_t> canonical_bytes(const AuditEntry& entry);

struct VerifyResult {
  bool ok = true;
  std::optional<std::size_t> tamper_index;
  std::string reason;
};

// Checks every entry hash and link. The first entry may be the genesis
// (sequence 0, zero prev_hash) or the oldest survivor of a ring buffer, in
// which case its prev_hash is taken as the anchor.
VerifyResult verify_chain(std::span<const AuditEntry> entries);

// JSON Lines, one canonical object per entry, hashes in lowercase hex.
std::string format_entry_line(const AuditEntry& entry);
std::string export_jsonl(std::span<const AuditEntry> entries);
// Strict parse; nullopt when the line is not byte-for-byte canonical.
std::optional<AuditEntry> parse_entry_line(std::string_view line);
VerifyResult verify_jsonl(std::string_view text);
// Throws InvalidConfig naming the first bad line.
std::vector<AuditEntry> import_jsonl(std::string_view text);

// Hash-chained in-memory ring buffer. Appends are serialized; eviction keeps
// the chain verifiable from the oldest retained entry.
class AuditLog {
 public:
  using Clock = std::function<std::int64_t()>;
  static constexpr std::size_t kDefaultCapacity = 4096;

  explicit AuditLog(std::size_t capacity = kDefaultCapacity, Clock clock = {});

  // Replaces the contents with a previously exported chain so appends continue
  // it. Throws InvalidConfig if the chain does not verify.
  void resume(std::vector<AuditEntry> entries);

  AuditEntry append(const AuditRecord& record);

  std::vector<AuditEntry> snapshot() const;
  VerifyResult verify() const;
  Hash256 head() const;
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t next_sequence() const;

 private:
  std::size_t capacity_;
  Clock clock_;
  mutable std::mutex mu_;
  std::deque<AuditEntry> entries_;
  Hash256 head_{};
  std::uint64_t next_seq_ = 0;
};

std::int64_t wall_clock_ms();

}  // namespace logitgov
