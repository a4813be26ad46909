#include "logitgov/backend.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "logitgov/error.hpp"

namespace logitgov {

namespace {

constexpr std::uint32_t kFnvOffset = 2166136261u;
constexpr std::uint32_t kFnvPrime = 16777619u;

std::uint32_t fnv1a(std::uint32_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint32_t fnv1a_u32(std::uint32_t h, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a(h, b, 4);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void put_u32(std::byte* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::byte>(v >> (8 * i));
}

std::uint32_t get_u32(const std::byte* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(in[i]) << (8 * i);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> texts,
                       std::vector<TokenId> special)
    : texts_(std::move(texts)), special_(texts_.size(), false) {
  for (TokenId id = 0; id < texts_.size(); ++id) {
    const std::string& t = texts_[id];
    if (t.empty()) {
      throw Error(ErrorCode::InvalidConfig,
                  "empty token text at id " + std::to_string(id));
    }
    if (!index_.emplace(t, id).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate token text '" + t + "'");
    }
  }
  for (TokenId id : special) {
    if (id >= texts_.size()) {
      throw Error(ErrorCode::InvalidToken,
                  "special id " + std::to_string(id) + " out of range");
    }
    special_[id] = true;
  }
  for (TokenId id = 0; id < texts_.size(); ++id) {
    if (!special_[id]) {
      max_token_bytes_ = std::max(max_token_bytes_, texts_[id].size());
    }
  }
}

std::optional<TokenId> Vocabulary::text_to_id(std::string_view text) const {
  auto it = index_.find(text);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::text(TokenId id) const {
  if (id >= texts_.size()) {
    throw Error(ErrorCode::InvalidToken,
                "token " + std::to_string(id) + " >= |V| " +
                    std::to_string(texts_.size()));
  }
  return texts_[id];
}

bool Vocabulary::is_special(TokenId id) const {
  return id < special_.size() && special_[id];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(max_token_bytes_, text.size() - pos);
    bool found = false;
    for (; len > 0; --len) {
      auto it = index_.find(text.substr(pos, len));
      if (it != index_.end() && !special_[it->second]) {
        out.push_back(it->second);
        pos += len;
        found = true;
        break;
      }
    }
    if (!found) {
      throw Error(ErrorCode::UnencodableInput,
                  "no token covers byte 0x" +
                      [&] {
                        char buf[3];
                        std::snprintf(buf, sizeof buf, "%02x",
                                      static_cast<unsigned char>(text[pos]));
                        return std::string(buf);
                      }() +
                      " at offset " + std::to_string(pos));
    }
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += text(id);
  return out;
}

// ---------------------------------------------------------------------------
// HistorySession

std::uint32_t HistorySession::seed_digest() const {
  std::uint32_t h = fnv1a(kFnvOffset, model_->name.data(), model_->name.size());
  h = fnv1a_u32(h, model_->layer_count);
  h = fnv1a_u32(h, static_cast<std::uint32_t>(model_->bytes_per_position));
  return fnv1a_u32(h, static_cast<std::uint32_t>(model_->bytes_per_position >> 32));
}

LogitVector HistorySession::forward_one(TokenId token) {
  if (token >= vocab_->size()) {
    throw Error(ErrorCode::InvalidToken,
                "token " + std::to_string(token) + " >= |V| " +
                    std::to_string(vocab_->size()));
  }
  history_.push_back(token);
  return logits_for(history_);
}

void HistorySession::save_kv(std::span<std::byte> out) const {
  const std::uint64_t stride = model_->bytes_per_position;
  if (stride < kHistoryRecordBytes || out.size() != history_.size() * stride) {
    throw Error(ErrorCode::CorruptCheckpoint, "KV output buffer has wrong size");
  }
  std::memset(out.data(), 0, out.size());
  std::uint32_t digest = seed_digest();
  for (std::size_t i = 0; i < history_.size(); ++i) {
    digest = fnv1a_u32(digest, history_[i]);
    std::byte* rec = out.data() + i * stride;
    put_u32(rec, history_[i]);
    put_u32(rec + 4, digest);
  }
}

void HistorySession::load_kv(std::uint64_t position,
                             std::span<const std::byte> payload) {
  const std::uint64_t stride = model_->bytes_per_position;
  if (stride < kHistoryRecordBytes || payload.size() / stride != position ||
      payload.size() % stride != 0) {
    throw Error(ErrorCode::CorruptCheckpoint,
                "payload length does not match position x bytes_per_position");
  }
  std::vector<TokenId> restored;
  restored.reserve(position);
  std::uint32_t digest = seed_digest();
  for (std::uint64_t i = 0; i < position; ++i) {
    const std::byte* rec = payload.data() + i * stride;
    const TokenId token = get_u32(rec);
    digest = fnv1a_u32(digest, token);
    if (token >= vocab_->size() || get_u32(rec + 4) != digest) {
      throw Error(ErrorCode::CorruptCheckpoint,
                  "KV record " + std::to_string(i) + " failed validation");
    }
    for (std::uint64_t b = kHistoryRecordBytes; b < stride; ++b) {
      if (rec[b] != std::byte{0}) {
        throw Error(ErrorCode::CorruptCheckpoint,
                    "nonzero padding in KV record " + std::to_string(i));
      }
    }
    restored.push_back(token);
  }
  history_ = std::move(restored);
}

LogitVector run_prompt(Session& session, std::string_view prompt) {
  const std::vector<TokenId> tokens = session.encode(prompt);
  if (tokens.empty()) {
    throw Error(ErrorCode::UnencodableInput, "empty prompt has no answer position");
  }
  session.reset_kv();
  LogitVector logits;
  for (TokenId t : tokens) logits = session.forward_one(t);
  return logits;
}

// ---------------------------------------------------------------------------
// FixtureBackend

namespace {

class FixtureSession final : public HistorySession {
 public:
  explicit FixtureSession(const FixtureBackend& backend)
      : HistorySession(backend.vocab(), backend.model()), backend_(&backend) {}

 protected:
  LogitVector logits_for(std::span<const TokenId> history) const override {
    return backend_->logits_for(history);
  }

 private:
  const FixtureBackend* backend_;
};

}  // namespace

FixtureBackend::FixtureBackend(Vocabulary vocab, std::uint64_t default_seed,
                               ModelIdentity model)
    : vocab_(std::move(vocab)),
      model_(std::move(model)),
      default_seed_(default_seed) {
  if (vocab_.size() == 0) {
    throw Error(ErrorCode::InvalidConfig, "fixture vocabulary is empty");
  }
  if (model_.bytes_per_position < kHistoryRecordBytes) {
    throw Error(ErrorCode::InvalidConfig, "bytes_per_position must be >= 8");
  }
}

FixtureBackend FixtureBackend::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    std::vector<std::string> vocab = doc.at("vocab").get<std::vector<std::string>>();
    std::vector<TokenId> special;
    if (doc.contains("special")) special = doc["special"].get<std::vector<TokenId>>();
    ModelIdentity model{"fixture", 1, kHistoryRecordBytes};
    if (doc.contains("model")) {
      const auto& m = doc["model"];
      model.name = m.value("name", model.name);
      model.layer_count = m.value("layer_count", model.layer_count);
      model.bytes_per_position = m.value("bytes_per_position", model.bytes_per_position);
    }
    FixtureBackend backend(Vocabulary(std::move(vocab), std::move(special)),
                           doc.value("default_seed", std::uint64_t{0}),
                           std::move(model));
    if (doc.contains("rows")) {
      for (const auto& row : doc["rows"]) {
        // A row is keyed by an explicit token history or by prompt text, and
        // its logits are either a full array or a sparse {token text: value}
        // object over a base value (default 0).
        std::vector<TokenId> history =
            row.contains("prompt")
                ? backend.vocab().encode(row["prompt"].get<std::string>())
                : row.at("history").get<std::vector<TokenId>>();
        const auto& logits = row.at("logits");
        LogitVector values;
        if (logits.is_object()) {
          values.assign(backend.vocab().size(), row.value("base", 0.0));
          for (const auto& [text, value] : logits.items()) {
            const auto id = backend.vocab().text_to_id(text);
            if (!id) {
              throw Error(ErrorCode::InvalidToken,
                          "fixture row names unknown token '" + text + "'");
            }
            values[*id] = value.get<double>();
          }
        } else {
          values = logits.get<LogitVector>();
        }
        backend.add_row(std::move(history), std::move(values));
      }
    }
    return backend;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("fixture JSON: ") + e.what());
  }
}

FixtureBackend FixtureBackend::load(const std::filesystem::path& path) {
  return from_json_text(read_file(path));
}

void FixtureBackend::add_row(std::vector<TokenId> history, LogitVector logits) {
  if (logits.size() != vocab_.size()) {
    throw Error(ErrorCode::InvalidConfig,
                "fixture row has " + std::to_string(logits.size()) +
                    " logits, vocabulary has " + std::to_string(vocab_.size()));
  }
  for (double v : logits) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::InvalidConfig, "fixture row contains a non-finite logit");
    }
  }
  for (TokenId t : history) {
    if (t >= vocab_.size()) {
      throw Error(ErrorCode::InvalidToken, "fixture history token out of range");
    }
  }
  rows_.insert_or_assign(std::move(history), std::move(logits));
}

std::unique_ptr<Session> FixtureBackend::new_session() const {
  return std::make_unique<FixtureSession>(*this);
}

LogitVector FixtureBackend::logits_for(std::span<const TokenId> history) const {
  auto it = rows_.find(std::vector<TokenId>(history.begin(), history.end()));
  if (it != rows_.end()) return it->second;
  return fallback_row(history);
}

LogitVector FixtureBackend::fallback_row(std::span<const TokenId> history) const {
  std::uint64_t h = 1469598103934665603ull ^ default_seed_;
  for (TokenId t : history) {
    h ^= t;
    h *= 1099511628211ull;
  }
  std::uint64_t state = h;
  LogitVector row(vocab_.size());
  for (double& v : row) {
    const double unit = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v = 16.0 * unit - 8.0;
  }
  return row;
}

// ---------------------------------------------------------------------------
// ToyLm

namespace {

class ToySession final : public HistorySession {
 public:
  explicit ToySession(const ToyLm& lm)
      : HistorySession(lm.vocab(), lm.model()), lm_(&lm) {}

 protected:
  LogitVector logits_for(std::span<const TokenId> history) const override {
    return lm_->logits_for(history);
  }

 private:
  const ToyLm* lm_;
};

std::string pack_context(std::span<const TokenId> ids) {
  std::string key;
  key.reserve(ids.size());
  for (TokenId t : ids) key.push_back(static_cast<char>(t));
  return key;
}

}  // namespace

Vocabulary ToyLm::make_vocabulary() {
  std::vector<std::string> texts;
  texts.reserve(kVocabSize);
  for (char c = 0x20; c <= 0x7e; ++c) texts.emplace_back(1, c);
  texts.emplace_back(kEndOfTextText);
  return Vocabulary(std::move(texts), {kEndOfText});
}

ToyLm::ToyLm(std::string_view corpus, ToyLmOptions options)
    : vocab_(make_vocabulary()), order_(options.order) {
  if (options.bytes_per_position < kHistoryRecordBytes) {
    throw Error(ErrorCode::InvalidConfig, "bytes_per_position must be >= 8");
  }
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx",
                static_cast<unsigned long long>(fnv1a64(corpus)));
  model_ = ModelIdentity{std::string("toylm-") + digest, order_,
                         options.bytes_per_position};

  // Each line is a document terminated by end-of-text; bytes outside the
  // printable range are dropped.
  std::vector<TokenId> doc;
  auto train = [&] {
    doc.push_back(kEndOfText);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const std::size_t max_ctx = std::min<std::size_t>(order_, i);
      for (std::size_t k = 0; k <= max_ctx; ++k) {
        auto& row = counts_[pack_context(std::span(doc).subspan(i - k, k))];
        if (row.empty()) row.assign(kVocabSize, 0);
        ++row[doc[i]];
      }
    }
    doc.clear();
  };
  for (char c : corpus) {
    if (c == '\n') {
      train();
    } else if (c >= 0x20 && c <= 0x7e) {
      doc.push_back(static_cast<TokenId>(c - 0x20));
    }
  }
  if (!doc.empty()) train();
}

ToyLm ToyLm::load(const std::filesystem::path& corpus_path, ToyLmOptions options) {
  return ToyLm(read_file(corpus_path), options);
}

std::unique_ptr<Session> ToyLm::new_session() const {
  return std::make_unique<ToySession>(*this);
}

LogitVector ToyLm::logits_for(std::span<const TokenId> history) const {
  const std::size_t k = std::min<std::size_t>(order_, history.size());
  const std::string key = pack_context(history.subspan(history.size() - k, k));
  LogitVector logits(kVocabSize);
  auto it = counts_.find(key);
  double total = 0.0;
  if (it != counts_.end()) {
    for (std::uint32_t c : it->second) total += c;
  }
  const double denom = total + static_cast<double>(kVocabSize);
  for (std::size_t i = 0; i < kVocabSize; ++i) {
    const double count = it != counts_.end() ? it->second[i] : 0.0;
    logits[i] = std::log((count + 1.0) / denom);
  }
  return logits;
}

}  // namespace logitgov
