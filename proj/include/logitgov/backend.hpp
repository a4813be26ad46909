#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logitgov {

using TokenId = std::uint32_t;

// Full-vocabulary scores from one forward step; length is always |V|.
using LogitVector = std::vector<double>;

// Immutable token table. Lookup by text goes through an ordered map, so
// text_to_id is O(log |V|).
class Vocabulary {
 public:
  Vocabulary() = default;
  // Special tokens are addressable by id and by exact text lookup but are never
  // produced by encode() and never admitted by grammar masks.
  explicit Vocabulary(std::vector<std::string> texts,
                      std::vector<TokenId> special = {});

  std::size_t size() const noexcept { return texts_.size(); }

  std::optional<TokenId> text_to_id(std::string_view text) const;
  const std::string& text(TokenId id) const;
  bool is_special(TokenId id) const;
  std::size_t max_token_bytes() const noexcept { return max_token_bytes_; }

  // Greedy longest-match tokenization; throws UnencodableInput on a byte no
  // regular token can cover.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::span<const std::string> texts() const noexcept { return texts_; }

 private:
  std::vector<std::string> texts_;
  std::vector<bool> special_;
  std::map<std::string, TokenId, std::less<>> index_;
  std::size_t max_token_bytes_ = 0;
};

struct ModelIdentity {
  std::string name;
  std::uint32_t layer_count = 1;
  std::uint64_t bytes_per_position = 8;

  bool operator==(const ModelIdentity&) const = default;
};

// One inference context. Owns the mutable KV state, so a session must only be
// driven from one thread at a time.
class Session {
 public:
  virtual ~Session() = default;

  virtual const Vocabulary& vocab() const = 0;
  virtual const ModelIdentity& model() const = 0;

  // Appends `token` to the KV state and returns the next-token logits.
  virtual LogitVector forward_one(TokenId token) = 0;
  virtual void reset_kv() = 0;
  virtual std::uint64_t kv_position() const = 0;

  // Serialized KV state: exactly kv_position() * bytes_per_position bytes.
  virtual void save_kv(std::span<std::byte> out) const = 0;
  virtual void load_kv(std::uint64_t position,
                       std::span<const std::byte> payload) = 0;

  std::vector<TokenId> encode(std::string_view text) const {
    return vocab().encode(text);
  }
};

// Immutable model description that hands out independent sessions. A backend
// must outlive every session it creates.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const Vocabulary& vocab() const = 0;
  virtual const ModelIdentity& model() const = 0;
  virtual std::unique_ptr<Session> new_session() const = 0;
};

// Shared KV machinery for backends whose state is the token history. Each
// position is stored as a record of {u32 token, u32 chained digest}, zero
// padded to bytes_per_position.
class HistorySession : public Session {
 public:
  const Vocabulary& vocab() const override { return *vocab_; }
  const ModelIdentity& model() const override { return *model_; }

  LogitVector forward_one(TokenId token) override;
  void reset_kv() override { history_.clear(); }
  std::uint64_t kv_position() const override { return history_.size(); }
  void save_kv(std::span<std::byte> out) const override;
  void load_kv(std::uint64_t position,
               std::span<const std::byte> payload) override;

  std::span<const TokenId> history() const noexcept { return history_; }

 protected:
  HistorySession(const Vocabulary& vocab, const ModelIdentity& model)
      : vocab_(&vocab), model_(&model) {}

  virtual LogitVector logits_for(std::span<const TokenId> history) const = 0;

 private:
  std::uint32_t seed_digest() const;

  const Vocabulary* vocab_;
  const ModelIdentity* model_;
  std::vector<TokenId> history_;
};

inline constexpr std::uint64_t kHistoryRecordBytes = 8;

// Table-driven backend: rows map an exact token history to a logit row, and
// any other history gets a pseudo-random row derived from a seeded hash.
class FixtureBackend final : public Backend {
 public:
  FixtureBackend(Vocabulary vocab, std::uint64_t default_seed,
                 ModelIdentity model = {"fixture", 1, kHistoryRecordBytes});

  static FixtureBackend from_json_text(std::string_view text);
  static FixtureBackend load(const std::filesystem::path& path);

  void add_row(std::vector<TokenId> history, LogitVector logits);

  const Vocabulary& vocab() const override { return vocab_; }
  const ModelIdentity& model() const override { return model_; }
  std::unique_ptr<Session> new_session() const override;

  LogitVector logits_for(std::span<const TokenId> history) const;
  LogitVector fallback_row(std::span<const TokenId> history) const;
  std::uint64_t default_seed() const noexcept { return default_seed_; }
  std::size_t row_count() const noexcept { return rows_.size(); }

 private:
  Vocabulary vocab_;
  ModelIdentity model_;
  std::uint64_t default_seed_;
  std::map<std::vector<TokenId>, LogitVector> rows_;
};

struct ToyLmOptions {
  // Characters of context the count model conditions on.
  std::uint32_t order = 1;
  std::uint64_t bytes_per_position = kHistoryRecordBytes;
};

// Character-level count model with add-one smoothing over the 95 printable
// ASCII characters plus an end-of-text token (|V| = 96).
class ToyLm final : public Backend {
 public:
  static constexpr std::size_t kVocabSize = 96;
  static constexpr TokenId kEndOfText = 95;
  static constexpr std::string_view kEndOfTextText = "<|endoftext|>";

  explicit ToyLm(std::string_view corpus, ToyLmOptions options = {});
  static ToyLm load(const std::filesystem::path& corpus_path,
                    ToyLmOptions options = {});

  static Vocabulary make_vocabulary();

  const Vocabulary& vocab() const override { return vocab_; }
  const ModelIdentity& model() const override { return model_; }
  std::unique_ptr<Session> new_session() const override;

  LogitVector logits_for(std::span<const TokenId> history) const;
  std::uint32_t order() const noexcept { return order_; }

 private:
  Vocabulary vocab_;
  ModelIdentity model_;
  std::uint32_t order_;
  // Context (token ids packed as bytes) -> next-token counts.
  std::map<std::string, std::vector<std::uint32_t>, std::less<>> counts_;
};

// Decorator that counts forward_one calls; everything else is forwarded.
class CountingSession final : public Session {
 public:
  explicit CountingSession(Session& inner) : inner_(&inner) {}

  const Vocabulary& vocab() const override { return inner_->vocab(); }
  const ModelIdentity& model() const override { return inner_->model(); }
  LogitVector forward_one(TokenId token) override {
    ++forward_calls_;
    return inner_->forward_one(token);
  }
  void reset_kv() override { inner_->reset_kv(); }
  std::uint64_t kv_position() const override { return inner_->kv_position(); }
  void save_kv(std::span<std::byte> out) const override { inner_->save_kv(out); }
  void load_kv(std::uint64_t position,
               std::span<const std::byte> payload) override {
    inner_->load_kv(position, payload);
  }

  std::size_t forward_calls() const noexcept { return forward_calls_; }
  void reset_count() noexcept { forward_calls_ = 0; }

 private:
  Session* inner_;
  std::size_t forward_calls_ = 0;
};

// Runs a prompt from a fresh KV state and returns the logits after its last
// token. Throws UnencodableInput for an empty prompt.
LogitVector run_prompt(Session& session, std::string_view prompt);

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace logitgov
