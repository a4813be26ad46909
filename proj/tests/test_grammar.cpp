#include <doctest.h>

#include <algorithm>
#include <random>

#include "logitgov/error.hpp"
#include "logitgov/grammar.hpp"
#include "support/grammar_oracle.hpp"
#include "support/test_support.hpp"

using namespace logitgov;
using namespace logitgov::testing;

namespace {

std::vector<std::string> unmasked_texts(const Vocabulary& vocab, const TokenMask& mask) {
  std::vector<std::string> out;
  for (TokenId i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(vocab.text(i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("initial mask admits first characters only") {
  const ToyLm lm("");
  ChoiceGrammar g({"Safe", "Dangerous"});
  const LogitVector logits(lm.vocab().size(), 0.0);
  const TokenMask mask = mask_logits(g, logits, lm.vocab());
  CHECK(unmasked_texts(lm.vocab(), mask) == std::vector<std::string>{"D", "S"});
  CHECK(mask == brute_force_mask(lm.vocab(), "", {"Safe", "Dangerous"}));
}

TEST_CASE("mask after shared prefix") {
  const ToyLm lm("");
  ChoiceGrammar g({"Safe", "Sane"});
  advance(g, *lm.vocab().text_to_id("S"), lm.vocab());
  advance(g, *lm.vocab().text_to_id("a"), lm.vocab());
  CHECK(g.prefix() == "Sa");
  const TokenMask mask = mask_logits(g, LogitVector(lm.vocab().size()), lm.vocab());
  CHECK(unmasked_texts(lm.vocab(), mask) == std::vector<std::string>{"f", "n"});
}

TEST_CASE("advance reaches completion") {
  const ToyLm lm("");
  const Vocabulary& v = lm.vocab();
  ChoiceGrammar g({"Yes", "No"});
  CHECK(advance(g, *v.text_to_id("Y"), v) == GrammarStatus::InProgress);
  CHECK(advance(g, *v.text_to_id("e"), v) == GrammarStatus::InProgress);
  CHECK(advance(g, *v.text_to_id("s"), v) == GrammarStatus::Complete);
  CHECK(g.completed_choice() == "Yes");

  ChoiceGrammar ab({"ab", "ac"});
  CHECK(advance(ab, *v.text_to_id("a"), v) == GrammarStatus::InProgress);
  CHECK(ab.remaining().size() == 2);

  ChoiceGrammar single({"A"});
  advance(single, *v.text_to_id("A"), v);
  CHECK(single.status() == GrammarStatus::Complete);
  CHECK_THROWS_AS(mask_logits(single, LogitVector(v.size()), v), Error);
}

TEST_CASE("advance with a masked token is rejected") {
  const ToyLm lm("");
  const Vocabulary& v = lm.vocab();
  ChoiceGrammar g({"Yes", "No"});
  try {
    advance(g, *v.text_to_id("x"), v);
    FAIL("expected InvalidAdvance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidAdvance);
  }
  CHECK(g.prefix().empty());
  CHECK_THROWS_AS(advance(g, ToyLm::kEndOfText, v), Error);
}

TEST_CASE("no spellable token fails the grammar") {
  const Vocabulary v({"a", "b"});
  ChoiceGrammar g({"xyz"});
  try {
    mask_logits(g, LogitVector(2), v);
    FAIL("expected NoValidToken");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoValidToken);
  }
  CHECK(g.status() == GrammarStatus::Failed);

  FixtureBackend backend(v, 3);
  auto s = backend.new_session();
  CHECK_THROWS_AS(decode_choice(*s, "ab", std::vector<std::string>{"xyz"}), Error);
}

TEST_CASE("decode follows fixture steering") {
  FixtureBuilder b;
  b.answer("P", {{"Dangerous", 5.0}});
  auto backend = b.build();
  auto s = backend->new_session();
  CHECK(decode_choice(*s, "P", std::vector<std::string>{"Safe", "Dangerous"}) == "Dangerous");
  CHECK(decode_choice(*s, "P", std::vector<std::string>{"OK"}) == "OK");
}

TEST_CASE("nested choices: shortest exact match completes first") {
  // Character vocabulary: the walk S-a-f-e hits "Safe" before "Safer".
  const ToyLm lm("Safer Safer Safer");
  auto s = lm.new_session();
  const std::vector<std::string> choices{"Safe", "Safer"};
  CHECK(decode_choice(*s, "x", choices) == "Safe");

  // A whole-word token can jump straight to the longer choice.
  const Vocabulary v({"x", "S", "a", "f", "e", "r", "Safer"});
  FixtureBuilder prefer_long(v, 1);
  prefer_long.answer("x", {{"Safer", 3.0}, {"S", 1.0}});
  auto backend = prefer_long.build();
  auto s2 = backend->new_session();
  CHECK(decode_choice(*s2, "x", choices) == "Safer");

  FixtureBuilder prefer_short(v, 1);
  prefer_short.answer("x", {{"Safer", 1.0}, {"S", 3.0}});
  auto backend3 = prefer_short.build();
  auto s3 = backend3->new_session();
  CHECK(decode_choice(*s3, "x", choices) == "Safe");
}

TEST_CASE("randomized mask matches brute force") {
  const Vocabulary vocab = fixture_vocab();
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> letter('A', 'E');
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_int_distribution<int> count(1, 5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> choices;
    for (int i = count(rng); i > 0; --i) {
      std::string c(len(rng), 'A');
      for (char& ch : c) ch = static_cast<char>(letter(rng));
      choices.push_back(c);
    }
    ChoiceGrammar g(choices);
    while (g.status() == GrammarStatus::InProgress) {
      const TokenMask mask = mask_logits(g, LogitVector(vocab.size()), vocab);
      CHECK(mask == brute_force_mask(vocab, g.prefix(), choices));
      std::vector<TokenId> allowed;
      for (TokenId i = 0; i < mask.size(); ++i) {
        if (mask[i]) allowed.push_back(i);
      }
      advance(g, allowed[rng() % allowed.size()], vocab);
    }
    CHECK(g.status() == GrammarStatus::Complete);
    CHECK(std::find(choices.begin(), choices.end(), g.completed_choice()) != choices.end());
  }
}
