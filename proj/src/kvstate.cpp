#include "logitgov/kvstate.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "logitgov/error.hpp"

namespace logitgov {

namespace {

std::uint64_t payload_size(std::uint64_t position, std::uint64_t bytes_per_position,
                           std::uint64_t cap) {
  const auto size = checked_mul(position, bytes_per_position);
  if (!size) {
    throw Error(ErrorCode::SizeOverflow,
                std::to_string(position) + " positions x " +
                    std::to_string(bytes_per_position) + " bytes overflows u64");
  }
  if (*size > cap) {
    throw Error(ErrorCode::CheckpointTooLarge,
                std::to_string(*size) + " bytes exceeds cap of " +
                    std::to_string(cap));
  }
  return *size;
}

class Writer {
 public:
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void bytes(std::span<const std::byte> b) { out.insert(out.end(), b.begin(), b.end()); }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (char c : s) out.push_back(static_cast<std::byte>(c));
  }

  std::vector<std::byte> out;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::byte>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::uint64_t le(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::to_integer<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::byte> take(std::uint64_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) {
      throw Error(ErrorCode::CorruptCheckpoint, "truncated checkpoint");
    }
  }

  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::byte> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset),
                static_cast<uInt>(n));
    offset += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::optional<std::uint64_t> checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  if (__builtin_mul_overflow(a, b, &r)) return std::nullopt;
  return r;
}

KvCheckpoint kv_checkpoint(const Session& session, std::uint64_t cap) {
  const ModelIdentity& model = session.model();
  const std::uint64_t position = session.kv_position();
  const std::uint64_t size = payload_size(position, model.bytes_per_position, cap);

  KvCheckpoint ckpt{model.name, model.layer_count, model.bytes_per_position, position,
                    std::vector<std::byte>(size)};
  session.save_kv(ckpt.payload);
  return ckpt;
}

KvCheckpoint kv_fork(const Session& session, std::uint64_t cap) {
  return kv_checkpoint(session, cap);
}

void kv_restore(Session& session, const KvCheckpoint& checkpoint, std::uint64_t cap) {
  const ModelIdentity& model = session.model();
  auto mismatch = [](const char* field, const std::string& have, const std::string& got) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(field) + ": session has " + have + ", checkpoint has " + got);
  };
  if (checkpoint.model_name != model.name) {
    mismatch("model_name", model.name, checkpoint.model_name);
  }
  if (checkpoint.layer_count != model.layer_count) {
    mismatch("layer_count", std::to_string(model.layer_count),
             std::to_string(checkpoint.layer_count));
  }
  if (checkpoint.bytes_per_position != model.bytes_per_position) {
    mismatch("bytes_per_position", std::to_string(model.bytes_per_position),
             std::to_string(checkpoint.bytes_per_position));
  }
  const std::uint64_t size =
      payload_size(checkpoint.position, checkpoint.bytes_per_position, cap);
  if (checkpoint.payload.size() != size) {
    throw Error(ErrorCode::CorruptCheckpoint,
                "payload is " + std::to_string(checkpoint.payload.size()) +
                    " bytes, expected " + std::to_string(size));
  }
  session.load_kv(checkpoint.position, checkpoint.payload);
}

std::vector<std::byte> serialize_checkpoint(const KvCheckpoint& checkpoint) {
  Writer w;
  w.bytes(std::as_bytes(std::span("AKVC", 4)));
  w.u16(kAkvcVersion);
  w.text(checkpoint.model_name);
  w.u32(checkpoint.layer_count);
  w.u64(checkpoint.bytes_per_position);
  w.u64(checkpoint.position);
  w.bytes(checkpoint.payload);
  w.u32(crc32_of(w.out));
  return std::move(w.out);
}

KvCheckpoint parse_checkpoint(std::span<const std::byte> bytes, std::uint64_t cap) {
  if (bytes.size() < 4 + 4) {
    throw Error(ErrorCode::CorruptCheckpoint, "file too short");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (crc32_of(body) != tail.le(4)) {
    throw Error(ErrorCode::CorruptCheckpoint, "CRC32 mismatch");
  }
  Reader r(body);
  if (std::memcmp(r.take(4).data(), "AKVC", 4) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, "bad magic");
  }
  if (const auto version = r.le(2); version != kAkvcVersion) {
    throw Error(ErrorCode::CorruptCheckpoint,
                "unsupported AKVC version " + std::to_string(version));
  }
  KvCheckpoint ckpt;
  const auto name = r.take(r.le(4));
  ckpt.model_name.assign(reinterpret_cast<const char*>(name.data()), name.size());
  ckpt.layer_count = static_cast<std::uint32_t>(r.le(4));
  ckpt.bytes_per_position = r.le(8);
  ckpt.position = r.le(8);
  const std::uint64_t size = payload_size(ckpt.position, ckpt.bytes_per_position, cap);
  const auto payload = r.take(size);
  ckpt.payload.assign(payload.begin(), payload.end());
  if (r.remaining() != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, "trailing bytes after payload");
  }
  return ckpt;
}

void write_checkpoint_file(const std::filesystem::path& path,
                           const KvCheckpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

KvCheckpoint read_checkpoint_file(const std::filesystem::path& path, std::uint64_t cap) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  return parse_checkpoint(std::as_bytes(std::span(raw)), cap);
}

}  // namespace logitgov
