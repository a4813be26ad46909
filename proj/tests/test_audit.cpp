#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <thread>

#include "logitgov/audit.hpp"
#include "logitgov/blake3.hpp"
#include "logitgov/error.hpp"

using namespace logitgov;

namespace {

std::vector<std::uint8_t> pattern_input(std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i % 251);
  return v;
}

AuditLog::Clock counting_clock() {
  return [t = std::int64_t{1'700'000'000'000}]() mutable { return t++; };
}

AuditRecord record(int i) {
  AuditRecord r;
  r.action_digest = Blake3::hash("action " + std::to_string(i));
  r.decision = static_cast<Decision>(i % 4);
  r.p_harmful = (i % 101) / 100.0;
  r.stage = i % 3 == 0 ? "prefilter" : "probe";
  r.note = i % 5 == 0 ? "matched:injection" : "";
  return r;
}

std::vector<AuditEntry> build_chain(std::size_t n, std::size_t capacity = 4096) {
  AuditLog log(capacity, counting_clock());
  for (std::size_t i = 0; i < n; ++i) log.append(record(static_cast<int>(i)));
  return log.snapshot();
}

}  // namespace

TEST_CASE("BLAKE3 reference vectors") {
  const std::pair<std::size_t, const char*> vectors[] = {
      {0, "af1349b9f5f9a1a6a0404dea36dcc9499bcb25c9adc112b7cc9a93cae41f3262"},
      {1, "2d3adedff11b61f14c886e35afa036736dcd87a74d27b5c1510225d0f592e213"},
      {63, "e9bc37a594daad83be9470df7f7b3798297c3d834ce80ba85d6e207627b7db7b"},
      {64, "4eed7141ea4a5cd4b788606bd23f46e212af9cacebacdc7d1f4c6dc7f2511b98"},
      {65, "de1e5fa0be70df6d2be8fffd0e99ceaa8eb6e8c93a63f2d8d1c30ecb6b263dee"},
      {1023, "10108970eeda3eb932baac1428c7a2163b0e924c9a9e25b35bba72b28f70bd11"},
      {1024, "42214739f095a406f3fc83deb889744ac00df831c10daa55189b5d121c855af7"},
      {1025, "d00278ae47eb27b34faecf67b4fe263f82d5412916c1ffd97c8cb7fb814b8444"},
      {2048, "e776b6028c7cd22a4d0ba182a8bf62205d2ef576467e838ed6f2529b85fba24a"},
      {2049, "5f4d72f40d7a5f82b15ca2b2e44b1de3c2ef86c426c95c1af0b6879522563030"},
      {3072, "b98cb0ff3623be03326b373de6b9095218513e64f1ee2edd2525c7ad1e5cffd2"},
      {3073, "7124b49501012f81cc7f11ca069ec9226cecb8a2c850cfe644e327d22d3e1cd3"},
      {4096, "015094013f57a5277b59d8475c0501042c0b642e531b0a1c8f58d2163229e969"},
      {4097, "9b4052b38f1c5fc8b1f9ff7ac7b27cd242487b3d890d15c96a1c25b8aa0fb995"},
      {8193, "bab6c09cb8ce8cf459261398d2e7aef35700bf488116ceb94a36d0f5f1b7bc3b"},
      {31744, "62b6960e1a44bcc1eb1a611a8d6235b6b4b78f32e7abc4fb4c6cdcce94895c47"},
      {102400, "bc3e3d41a1146b069abffad3c0d44860cf664390afce4d9661f7902e7943e085"},
  };
  for (const auto& [len, hex] : vectors) {
    CAPTURE(len);
    const auto input = pattern_input(len);
    CHECK(to_hex(Blake3::hash(input)) == hex);

    // Incremental updates with awkward split points give the same digest.
    Blake3 h;
    std::size_t off = 0, step = 1;
    while (off < len) {
      const std::size_t n = std::min(step, len - off);
      h.update(std::span(input).subspan(off, n));
      off += n;
      step = step * 3 + 1;
    }
    CHECK(to_hex(h.finalize()) == hex);
  }
  CHECK(to_hex(Blake3::hash("abc")) ==
        "6437b3ac38465133ffb63b75273a8db548c558465d79db03fd359c6cd5bd9d85");
}

TEST_CASE("hex decoding is strict") {
  Hash256 out{};
  CHECK(from_hex(std::string(64, 'a'), out));
  CHECK_FALSE(from_hex(std::string(64, 'A'), out));
  CHECK_FALSE(from_hex(std::string(63, 'a'), out));
  CHECK_FALSE(from_hex(std::string(64, 'g'), out));
}

TEST_CASE("chain starts at genesis and links every entry") {
  const auto chain = build_chain(10);
  REQUIRE(chain.size() == 10);
  CHECK(chain[0].sequence_number == 0);
  CHECK(chain[0].prev_hash == Hash256{});
  for (std::size_t i = 1; i < chain.size(); ++i) {
    CHECK(chain[i].sequence_number == i);
    CHECK(chain[i].prev_hash == chain[i - 1].entry_hash);
    CHECK(chain[i].timestamp_ms == chain[i - 1].timestamp_ms + 1);
  }
  for (const auto& e : chain) CHECK(compute_entry_hash(e) == e.entry_hash);
  CHECK(verify_chain(chain).ok);
  CHECK(verify_chain(std::span<const AuditEntry>{}).ok);
}

TEST_CASE("modifying entry 42 of 100 is located exactly") {
  auto chain = build_chain(100);
  chain[42].decision = Decision::Allow == chain[42].decision ? Decision::Block : Decision::Allow;
  const auto r = verify_chain(chain);
  CHECK_FALSE(r.ok);
  CHECK(r.tamper_index == 42u);

  // Re-hashing the edited entry moves the break to the next link.
  chain[42].entry_hash = compute_entry_hash(chain[42]);
  const auto r2 = verify_chain(chain);
  CHECK(r2.tamper_index == 43u);
}

TEST_CASE("each field is covered by the hash") {
  const auto chain = build_chain(3);
  auto check_field = [&](auto mutate) {
    auto copy = chain;
    mutate(copy[1]);
    const auto r = verify_chain(copy);
    CHECK_FALSE(r.ok);
    CHECK(r.tamper_index == 1u);
  };
  check_field([](AuditEntry& e) { e.sequence_number += 7; });
  check_field([](AuditEntry& e) { e.timestamp_ms += 1; });
  check_field([](AuditEntry& e) { e.action_digest[5] ^= 1; });
  check_field([](AuditEntry& e) { e.p_harmful = std::nextafter(e.p_harmful, 2.0); });
  check_field([](AuditEntry& e) { e.stage += "x"; });
  check_field([](AuditEntry& e) { e.note = "edited"; });
  check_field([](AuditEntry& e) { e.prev_hash[0] ^= 1; });
  check_field([](AuditEntry& e) { e.entry_hash[31] ^= 1; });
}

TEST_CASE("deletion and reordering break the chain; tail truncation does not") {
  const auto chain = build_chain(20);
  auto dropped = chain;
  dropped.erase(dropped.begin() + 7);
  CHECK(verify_chain(dropped).tamper_index == 7u);

  auto swapped = chain;
  std::swap(swapped[3], swapped[4]);
  CHECK(verify_chain(swapped).tamper_index == 3u);

  const std::span<const AuditEntry> prefix(chain.data(), 12);
  CHECK(verify_chain(prefix).ok);
  // A suffix is anchored at its first entry.
  CHECK(verify_chain(std::span(chain).subspan(5)).ok);
}

TEST_CASE("ring buffer evicts oldest and stays verifiable") {
  AuditLog log(8, counting_clock());
  for (int i = 0; i < 20; ++i) log.append(record(i));
  CHECK(log.size() == 8);
  CHECK(log.next_sequence() == 20);
  const auto snap = log.snapshot();
  CHECK(snap.front().sequence_number == 12);
  CHECK(snap.back().entry_hash == log.head());
  CHECK(log.verify().ok);
  CHECK(AuditLog().capacity() == 4096);
  CHECK_THROWS_AS(AuditLog(0), Error);
}

TEST_CASE("append cleans free text and rejects non-finite scores") {
  AuditLog log(4, counting_clock());
  AuditRecord r = record(1);
  r.note = "line\nbreak \"quoted\" back\\slash";
  const auto e = log.append(r);
  CHECK(e.note.find('\n') == std::string::npos);
  CHECK(e.note.find('"') == std::string::npos);
  CHECK(e.note.find('\\') == std::string::npos);
  r.p_harmful = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(log.append(r), Error);
  CHECK(log.size() == 1);
}

TEST_CASE("concurrent appends produce one consistent chain") {
  AuditLog log(10000, counting_clock());
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&log, t] {
      for (int i = 0; i < 250; ++i) log.append(record(t * 1000 + i));
    });
  }
  for (auto& th : threads) th.join();
  CHECK(log.size() == 1000);
  CHECK(log.verify().ok);
}

TEST_CASE("JSONL export is canonical and round-trips") {
  const auto chain = build_chain(25);
  const std::string text = export_jsonl(chain);
  CHECK(std::count(text.begin(), text.end(), '\n') == 25);
  CHECK(text.rfind("{\"seq\":0,\"timestamp_ms\":1700000000000,\"action_digest\":\"", 0) == 0);
  CHECK(import_jsonl(text) == chain);
  CHECK(verify_jsonl(text).ok);
  for (const auto& e : chain) {
    const auto parsed = parse_entry_line(format_entry_line(e));
    REQUIRE(parsed);
    CHECK(*parsed == e);
  }
}

TEST_CASE("non-canonical JSONL lines are rejected") {
  const auto chain = build_chain(2);
  const std::string line = format_entry_line(chain[1]);
  CHECK_FALSE(parse_entry_line(line + " "));
  CHECK_FALSE(parse_entry_line(" " + line));
  std::string upper = line;
  const auto pos = upper.find("\"entry_hash\":\"") + 14;
  upper[pos] = static_cast<char>(std::toupper(static_cast<unsigned char>(upper[pos])));
  if (upper != line) CHECK_FALSE(parse_entry_line(upper));
  std::string reordered = line;
  reordered.replace(reordered.find("\"seq\""), 5, "\"SEQ\"");
  CHECK_FALSE(parse_entry_line(reordered));
}

TEST_CASE("every byte flip in an exported chain is detected at the right line") {
  const auto chain = build_chain(12);
  const std::string text = export_jsonl(chain);
  std::vector<std::size_t> line_of(text.size());
  std::size_t line = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    line_of[i] = line;
    if (text[i] == '\n') ++line;
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    std::string bad = text;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    const auto r = verify_jsonl(bad);
    CAPTURE(i);
    REQUIRE_FALSE(r.ok);
    CHECK(*r.tamper_index >= line_of[i]);
    CHECK(*r.tamper_index <= line_of[i] + 1);
  }
}

TEST_CASE("resume continues an exported chain") {
  const auto chain = build_chain(5);
  AuditLog log(4096, counting_clock());
  log.resume(import_jsonl(export_jsonl(chain)));
  CHECK(log.next_sequence() == 5);
  const auto e = log.append(record(99));
  CHECK(e.prev_hash == chain.back().entry_hash);
  CHECK(log.verify().ok);

  auto broken = chain;
  broken[2].note = "x";
  CHECK_THROWS_AS(log.resume(broken), Error);
}

TEST_CASE("decision names round-trip") {
  for (Decision d : {Decision::Block, Decision::Warn, Decision::Log, Decision::Allow}) {
    CHECK(parse_decision(decision_name(d)) == d);
  }
  CHECK_FALSE(parse_decision("block"));
}
