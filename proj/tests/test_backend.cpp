#include <doctest.h>

#include <random>

#include "logitgov/backend.hpp"
#include "logitgov/error.hpp"
#include "support/test_support.hpp"

using namespace logitgov;
using logitgov::testing::FixtureBuilder;
using logitgov::testing::fixture_vocab;

TEST_CASE("text_to_id resolves only whole single tokens") {
  const Vocabulary vocab = fixture_vocab();
  REQUIRE(vocab.text_to_id("Yes").has_value());
  CHECK(vocab.text(*vocab.text_to_id("Yes")) == "Yes");
  CHECK_FALSE(vocab.text_to_id("").has_value());
  CHECK_FALSE(vocab.text_to_id("Yess").has_value());

  const Vocabulary split({"D", "anger", "ous", "Safe"});
  CHECK_FALSE(split.text_to_id("Dangerous").has_value());
  CHECK(split.encode("Dangerous").size() == 3);
}

TEST_CASE("vocabulary rejects duplicate and empty entries") {
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), Error);
  CHECK_THROWS_AS(Vocabulary({"a", ""}), Error);
}

TEST_CASE("encode is greedy longest match") {
  const Vocabulary vocab({"a", "b", "ab", "abc"});
  CHECK(vocab.encode("ab") == std::vector<TokenId>{2});
  CHECK(vocab.encode("abcab") == std::vector<TokenId>{3, 2});
  CHECK(vocab.encode("").empty());

  const Vocabulary singles({"a", "b"});
  CHECK(singles.encode("ab") == std::vector<TokenId>{0, 1});
}

TEST_CASE("encode reports vocabulary gaps") {
  const Vocabulary vocab({"a"});
  try {
    vocab.encode("ax");
    FAIL("expected UnencodableInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnencodableInput);
  }
}

TEST_CASE("toy LM encode/decode round trip on random ASCII") {
  const ToyLm lm("hello world");
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> ch(0x20, 0x7e);
  std::uniform_int_distribution<int> len(0, 40);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s(len(rng), ' ');
    for (char& c : s) c = static_cast<char>(ch(rng));
    const auto ids = lm.vocab().encode(s);
    CHECK(ids.size() == s.size());
    CHECK(lm.vocab().decode(ids) == s);
  }
}

TEST_CASE("toy LM vocabulary has 96 entries with end-of-text special") {
  const ToyLm lm("x");
  CHECK(lm.vocab().size() == 96);
  CHECK(lm.vocab().is_special(ToyLm::kEndOfText));
  CHECK(lm.vocab().text_to_id(ToyLm::kEndOfTextText) == ToyLm::kEndOfText);
  // Never produced by encode, even when the literal text appears.
  const auto ids = lm.vocab().encode("<|endoftext|>");
  CHECK(ids.size() == ToyLm::kEndOfTextText.size());
}

TEST_CASE("toy LM follows its training counts") {
  const ToyLm lm("aaab");
  auto session = lm.new_session();
  const TokenId a = *lm.vocab().text_to_id("a");
  const TokenId b = *lm.vocab().text_to_id("b");
  session->forward_one(a);
  const LogitVector logits = session->forward_one(a);
  CHECK(logits[a] > logits[b]);
  // Bigram oracle: after 'a' the corpus has a->a twice, a->b once.
  CHECK(logits[a] == doctest::Approx(std::log(3.0 / 99.0)).epsilon(1e-12));
  CHECK(logits[b] == doctest::Approx(std::log(2.0 / 99.0)).epsilon(1e-12));
}

TEST_CASE("forward_one advances position and is deterministic") {
  const ToyLm lm("the quick brown fox jumps over the lazy dog");
  auto s1 = lm.new_session();
  auto s2 = lm.new_session();
  const auto ids = lm.vocab().encode("the lazy");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const LogitVector l1 = s1->forward_one(ids[i]);
    const LogitVector l2 = s2->forward_one(ids[i]);
    CHECK(l1 == l2);
    CHECK(s1->kv_position() == i + 1);
  }
  CHECK_THROWS_AS(s1->forward_one(96), Error);
}

TEST_CASE("reset_kv restores fresh-session behaviour") {
  const ToyLm lm("abcabcabd");
  auto fresh = lm.new_session();
  auto used = lm.new_session();
  const auto ids = lm.vocab().encode("abca");
  for (TokenId t : lm.vocab().encode("zzzz")) used->forward_one(t);
  used->reset_kv();
  used->reset_kv();
  CHECK(used->kv_position() == 0);
  for (TokenId t : ids) CHECK(fresh->forward_one(t) == used->forward_one(t));
}

TEST_CASE("fixture backend returns tabled rows and seeded fallbacks") {
  FixtureBuilder builder;
  builder.answer("hi", {{"Yes", 3.0}});
  auto backend = builder.build();
  auto session = backend->new_session();
  const auto ids = backend->vocab().encode("hi");
  session->forward_one(ids[0]);
  const LogitVector row = session->forward_one(ids[1]);
  CHECK(row[*backend->vocab().text_to_id("Yes")] == 3.0);

  // Untabled history: deterministic pseudo-random row in [-8, 8).
  auto other = backend->new_session();
  other->forward_one(ids[0]);
  const LogitVector fb = other->forward_one(ids[0]);
  CHECK(fb == backend->fallback_row(std::vector<TokenId>{ids[0], ids[0]}));
  for (double v : fb) {
    CHECK(v >= -8.0);
    CHECK(v < 8.0);
  }
  FixtureBuilder reseeded(8);
  auto b2 = reseeded.build();
  CHECK(b2->fallback_row(std::vector<TokenId>{ids[0], ids[0]}) != fb);
}

TEST_CASE("fixture JSON loads vocab, rows, seed and optional model") {
  const auto backend = FixtureBackend::from_json_text(R"({
    "vocab": ["a", "b", "Yes", "No"],
    "rows": [{"history": [0, 1], "logits": [0.0, 0.5, 2.0, -1.0]}],
    "default_seed": 11,
    "model": {"name": "tiny", "layer_count": 2}
  })");
  CHECK(backend.vocab().size() == 4);
  CHECK(backend.default_seed() == 11);
  CHECK(backend.model().name == "tiny");
  CHECK(backend.model().layer_count == 2);
  CHECK(backend.model().bytes_per_position == kHistoryRecordBytes);
  auto s = backend.new_session();
  s->forward_one(0);
  CHECK(s->forward_one(1) == LogitVector{0.0, 0.5, 2.0, -1.0});

  CHECK_THROWS_AS(FixtureBackend::from_json_text(
                      R"({"vocab": ["a"], "rows": [{"history": [0], "logits": [1, 2]}]})"),
                  Error);
  CHECK_THROWS_AS(FixtureBackend::from_json_text("{not json"), Error);
}

TEST_CASE("counting session counts forwards") {
  const ToyLm lm("abc");
  auto inner = lm.new_session();
  CountingSession counting(*inner);
  run_prompt(counting, "abcab");
  CHECK(counting.forward_calls() == 5);
  CHECK_THROWS_AS(run_prompt(counting, ""), Error);
}
