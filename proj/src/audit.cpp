#include "logitgov/audit.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cctype>
#include <cstring>

#include "logitgov/error.hpp"

namespace logitgov {

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_text(std::vector<std::uint8_t>& out, std::string_view s) {
  put_le(out, s.size(), 4);
  out.insert(out.end(), s.begin(), s.end());
}

bool field_char_ok(char c) { return c >= 0x20 && c <= 0x7e && c != '"' && c != '\\'; }

std::string clean_field(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (!field_char_ok(c)) c = '?';
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Cursor over one canonical line; every accessor fails on any deviation from
// the exact bytes format_entry_line would produce.
class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool lit(std::string_view expected) {
    if (!s_.starts_with(expected)) return false;
    s_.remove_prefix(expected.size());
    return true;
  }

  template <typename Int>
  bool integer(Int& out) {
    std::size_t n = 0;
    while (n < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[n])) ||
                             (n == 0 && s_[n] == '-'))) {
      ++n;
    }
    const std::string_view token = s_.substr(0, n);
    auto res = std::from_chars(token.data(), token.data() + token.size(), out);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) return false;
    char buf[24];
    auto back = std::to_chars(buf, buf + sizeof buf, out);
    if (std::string_view(buf, back.ptr) != token) return false;
    s_.remove_prefix(n);
    return true;
  }

  bool real(double& out) {
    std::size_t n = 0;
    while (n < s_.size() && std::strchr("0123456789.eE+-", s_[n]) != nullptr &&
           s_[n] != '\0') {
      ++n;
    }
    const std::string_view token = s_.substr(0, n);
    auto res = std::from_chars(token.data(), token.data() + token.size(), out);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) return false;
    if (!std::isfinite(out) || format_double(out) != token) return false;
    s_.remove_prefix(n);
    return true;
  }

  bool text(std::string& out) {
    if (!lit("\"")) return false;
    const std::size_t close = s_.find('"');
    if (close == std::string_view::npos) return false;
    const std::string_view body = s_.substr(0, close);
    for (char c : body) {
      if (!field_char_ok(c)) return false;
    }
    out.assign(body);
    s_.remove_prefix(close + 1);
    return true;
  }

  bool hash(Hash256& out) {
    if (!lit("\"") || s_.size() < 64 || !from_hex(s_.substr(0, 64), out)) return false;
    s_.remove_prefix(64);
    return lit("\"");
  }

  bool done() const { return s_.empty(); }

 private:
  std::string_view s_;
};

}  // namespace

std::string_view decision_name(Decision d) {
  switch (d) {
    case Decision::Block: return "Block";
    case Decision::Warn: return "Warn";
    case Decision::Log: return "Log";
    case Decision::Allow: return "Allow";
  }
  return "Block";
}

std::optional<Decision> parse_decision(std::string_view name) {
  for (Decision d : {Decision::Block, Decision::Warn, Decision::Log, Decision::Allow}) {
    if (decision_name(d) == name) return d;
  }
  return std::nullopt;
}

std::vector<std::uint8_t> canonical_bytes(const AuditEntry& e) {
  std::vector<std::uint8_t> out;
  out.reserve(128 + e.stage.size() + e.note.size());
  put_le(out, e.sequence_number, 8);
  put_le(out, static_cast<std::uint64_t>(e.timestamp_ms), 8);
  out.insert(out.end(), e.action_digest.begin(), e.action_digest.end());
  out.push_back(static_cast<std::uint8_t>(e.decision));
  put_le(out, std::bit_cast<std::uint64_t>(e.p_harmful), 8);
  put_text(out, e.stage);
  put_text(out, e.note);
  out.insert(out.end(), e.prev_hash.begin(), e.prev_hash.end());
  return out;
}

Hash256 compute_entry_hash(const AuditEntry& entry) {
  return Blake3::hash(canonical_bytes(entry));
}

VerifyResult verify_chain(std::span<const AuditEntry> entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const AuditEntry& e = entries[i];
    if (compute_entry_hash(e) != e.entry_hash) {
      return {false, i, "entry hash mismatch"};
    }
    if (i == 0) {
      if (e.sequence_number == 0 && e.prev_hash != Hash256{}) {
        return {false, i, "genesis entry has nonzero prev_hash"};
      }
      continue;
    }
    if (e.sequence_number != entries[i - 1].sequence_number + 1) {
      return {false, i, "sequence gap"};
    }
    if (e.prev_hash != entries[i - 1].entry_hash) {
      return {false, i, "broken link to previous entry"};
    }
  }
  return {};
}

std::string format_entry_line(const AuditEntry& e) {
  std::string line;
  line.reserve(320);
  line += "{\"seq\":";
  line += std::to_string(e.sequence_number);
  line += ",\"timestamp_ms\":";
  line += std::to_string(e.timestamp_ms);
  line += ",\"action_digest\":\"";
  line += to_hex(e.action_digest);
  line += "\",\"decision\":\"";
  line += decision_name(e.decision);
  line += "\",\"p_harmful\":";
  line += format_double(e.p_harmful);
  line += ",\"stage\":\"";
  line += e.stage;
  line += "\",\"note\":\"";
  line += e.note;
  line += "\",\"prev_hash\":\"";
  line += to_hex(e.prev_hash);
  line += "\",\"entry_hash\":\"";
  line += to_hex(e.entry_hash);
  line += "\"}";
  return line;
}

std::string export_jsonl(std::span<const AuditEntry> entries) {
  std::string out;
  for (const AuditEntry& e : entries) {
    out += format_entry_line(e);
    out += '\n';
  }
  return out;
}

std::optional<AuditEntry> parse_entry_line(std::string_view line) {
  Cursor c(line);
  AuditEntry e;
  std::string decision;
  if (!(c.lit("{\"seq\":") && c.integer(e.sequence_number) &&
        c.lit(",\"timestamp_ms\":") && c.integer(e.timestamp_ms) &&
        c.lit(",\"action_digest\":") && c.hash(e.action_digest) &&
        c.lit(",\"decision\":") && c.text(decision) &&
        c.lit(",\"p_harmful\":") && c.real(e.p_harmful) &&
        c.lit(",\"stage\":") && c.text(e.stage) &&
        c.lit(",\"note\":") && c.text(e.note) &&
        c.lit(",\"prev_hash\":") && c.hash(e.prev_hash) &&
        c.lit(",\"entry_hash\":") && c.hash(e.entry_hash) && c.lit("}") && c.done())) {
    return std::nullopt;
  }
  const auto d = parse_decision(decision);
  if (!d) return std::nullopt;
  e.decision = *d;
  return e;
}

namespace {

// Splits on '\n'; a single trailing newline does not start another line.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    if (nl == std::string_view::npos) {
      lines.push_back(text);
      break;
    }
    lines.push_back(text.substr(0, nl));
    text.remove_prefix(nl + 1);
  }
  return lines;
}

}  // namespace

VerifyResult verify_jsonl(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<AuditEntry> entries;
  entries.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto e = parse_entry_line(lines[i]);
    if (!e) return {false, i, "line is not a canonical audit entry"};
    entries.push_back(std::move(*e));
    // Check links as we go so a later malformed line cannot mask an earlier
    // break.
    const VerifyResult partial =
        verify_chain(std::span(entries).subspan(i == 0 ? 0 : i - 1, i == 0 ? 1 : 2));
    if (!partial.ok) {
      return {false, i, partial.reason};
    }
  }
  return {};
}

std::vector<AuditEntry> import_jsonl(std::string_view text) {
  std::vector<AuditEntry> entries;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto e = parse_entry_line(lines[i]);
    if (!e) {
      throw Error(ErrorCode::InvalidConfig,
                  "audit line " + std::to_string(i) + " is not canonical");
    }
    entries.push_back(std::move(*e));
  }
  return entries;
}

std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

AuditLog::AuditLog(std::size_t capacity, Clock clock)
    : capacity_(capacity), clock_(clock ? std::move(clock) : Clock(wall_clock_ms)) {
  if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "audit capacity must be > 0");
}

void AuditLog::resume(std::vector<AuditEntry> entries) {
  const VerifyResult check = verify_chain(entries);
  if (!check.ok) {
    throw Error(ErrorCode::InvalidConfig,
                "cannot resume audit chain: tamper at index " +
                    std::to_string(*check.tamper_index) + " (" + check.reason + ")");
  }
  std::lock_guard lock(mu_);
  head_ = entries.empty() ? Hash256{} : entries.back().entry_hash;
  next_seq_ = entries.empty() ? 0 : entries.back().sequence_number + 1;
  const std::size_t skip = entries.size() > capacity_ ? entries.size() - capacity_ : 0;
  entries_.assign(std::make_move_iterator(entries.begin() + skip),
                  std::make_move_iterator(entries.end()));
}

AuditEntry AuditLog::append(const AuditRecord& record) {
  if (!std::isfinite(record.p_harmful)) {
    throw Error(ErrorCode::InvalidConfig, "audit p_harmful must be finite");
  }
  std::lock_guard lock(mu_);
  AuditEntry e;
  e.sequence_number = next_seq_;
  e.timestamp_ms = clock_();
  e.action_digest = record.action_digest;
  e.decision = record.decision;
  e.p_harmful = record.p_harmful;
  e.stage = clean_field(record.stage);
  e.note = clean_field(record.note);
  e.prev_hash = head_;
  e.entry_hash = compute_entry_hash(e);

  head_ = e.entry_hash;
  ++next_seq_;
  entries_.push_back(e);
  if (entries_.size() > capacity_) entries_.pop_front();
  return e;
}

std::vector<AuditEntry> AuditLog::snapshot() const {
  std::lock_guard lock(mu_);
  return {entries_.begin(), entries_.end()};
}

VerifyResult AuditLog::verify() const {
  const auto entries = snapshot();
  return verify_chain(entries);
}

Hash256 AuditLog::head() const {
  std::lock_guard lock(mu_);
  return head_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::uint64_t AuditLog::next_sequence() const {
  std::lock_guard lock(mu_);
  return next_seq_;
}

}  // namespace logitgov
