#include "logitgov/grammar.hpp"

#include <algorithm>

#include "logitgov/error.hpp"
#include "logitgov/kernels.hpp"

namespace logitgov {

ChoiceGrammar::ChoiceGrammar(std::vector<std::string> choices)
    : choices_(std::move(choices)) {
  if (choices_.empty()) {
    throw Error(ErrorCode::InvalidConfig, "choice grammar needs at least one choice");
  }
  std::sort(choices_.begin(), choices_.end());
  choices_.erase(std::unique(choices_.begin(), choices_.end()), choices_.end());
  refresh();
}

void ChoiceGrammar::refresh() {
  remaining_.clear();
  for (const std::string& c : choices_) {
    if (c.starts_with(prefix_)) remaining_.push_back(c);
  }
  if (remaining_.empty()) {
    status_ = GrammarStatus::Failed;
  } else if (std::find(remaining_.begin(), remaining_.end(), prefix_) !=
             remaining_.end()) {
    status_ = GrammarStatus::Complete;
    completed_ = prefix_;
  }
}

bool ChoiceGrammar::accepts(std::string_view text) const {
  if (status_ != GrammarStatus::InProgress || text.empty()) return false;
  for (const std::string& c : remaining_) {
    if (c.size() >= prefix_.size() + text.size() &&
        c.compare(prefix_.size(), text.size(), text) == 0) {
      return true;
    }
  }
  return false;
}

TokenMask mask_logits(ChoiceGrammar& grammar, std::span<const double> logits,
                      const Vocabulary& vocab) {
  if (logits.size() != vocab.size()) {
    throw Error(ErrorCode::InvalidConfig, "logit vector length != |V|");
  }
  if (grammar.status_ != GrammarStatus::InProgress) {
    throw Error(ErrorCode::NoValidToken, "grammar is not in progress");
  }
  TokenMask mask(vocab.size(), 0);
  kernels::choice_mask(vocab, grammar.prefix_, grammar.remaining_, mask);
  if (std::find(mask.begin(), mask.end(), 1) == mask.end()) {
    grammar.status_ = GrammarStatus::Failed;
    throw Error(ErrorCode::NoValidToken,
                "no token extends prefix '" + grammar.prefix_ + "'");
  }
  return mask;
}

GrammarStatus advance(ChoiceGrammar& grammar, TokenId token, const Vocabulary& vocab) {
  const std::string& text = vocab.text(token);
  if (vocab.is_special(token) || !grammar.accepts(text)) {
    throw Error(ErrorCode::InvalidAdvance,
                "token " + std::to_string(token) + " ('" + text +
                    "') is masked at prefix '" + grammar.prefix_ + "'");
  }
  grammar.prefix_ += text;
  grammar.refresh();
  return grammar.status_;
}

std::string decode_choice(Session& session, std::string_view prompt,
                          std::span<const std::string> choices) {
  ChoiceGrammar grammar({choices.begin(), choices.end()});
  if (grammar.status() == GrammarStatus::Complete) return grammar.completed_choice();

  const Vocabulary& vocab = session.vocab();
  LogitVector logits = run_prompt(session, prompt);
  // Every step appends at least one byte, so this terminates.
  while (true) {
    const TokenMask mask = mask_logits(grammar, logits, vocab);
    const TokenId next = *kernels::masked_argmax(logits, mask);
    if (advance(grammar, next, vocab) == GrammarStatus::Complete) {
      return grammar.completed_choice();
    }
    logits = session.forward_one(next);
  }
}

}  // namespace logitgov
