#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "logitgov/backend.hpp"

namespace logitgov {

enum class GrammarStatus { InProgress, Complete, Failed };

// 1 = token may be sampled. Kept beside the logits instead of writing -inf
// into them, so the original vector stays usable (e.g. for entropy).
using TokenMask = std::vector<std::uint8_t>;

// Constrains generation to one of a fixed set of strings by character-level
// prefix matching. A choice completes as soon as the generated prefix equals
// it exactly, even if a longer choice extends it.
class ChoiceGrammar {
 public:
  explicit ChoiceGrammar(std::vector<std::string> choices);

  GrammarStatus status() const noexcept { return status_; }
  const std::string& prefix() const noexcept { return prefix_; }
  std::span<const std::string> choices() const noexcept { return choices_; }
  std::span<const std::string> remaining() const noexcept { return remaining_; }
  // Only meaningful when status() == Complete.
  const std::string& completed_choice() const noexcept { return completed_; }

  // True iff appending `text` keeps the prefix consistent with a remaining
  // choice.
  bool accepts(std::string_view text) const;

 private:
  friend TokenMask mask_logits(ChoiceGrammar&, std::span<const double>,
                               const Vocabulary&);
  friend GrammarStatus advance(ChoiceGrammar&, TokenId, const Vocabulary&);

  void refresh();

  std::vector<std::string> choices_;
  std::vector<std::string> remaining_;
  std::string prefix_;
  std::string completed_;
  GrammarStatus status_ = GrammarStatus::InProgress;
};

// Throws NoValidToken (and moves the grammar to Failed) when the vocabulary
// cannot extend the prefix toward any remaining choice.
TokenMask mask_logits(ChoiceGrammar& grammar, std::span<const double> logits,
                      const Vocabulary& vocab);

// Throws InvalidAdvance for a token the current mask would reject.
GrammarStatus advance(ChoiceGrammar& grammar, TokenId token, const Vocabulary& vocab);

// Greedy constrained decode. The result is always one of `choices`.
std::string decode_choice(Session& session, std::string_view prompt,
                          std::span<const std::string> choices);

}  // namespace logitgov
