#include "logitgov/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "logitgov/error.hpp"

namespace logitgov {

const ClassResult* ProbeResult::find(std::string_view label) const {
  for (const ClassResult& r : results) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

void validate_labels(std::span<const std::string> labels) {
  if (labels.size() < 2) {
    throw Error(ErrorCode::EmptyLabels, "need at least two labels, got " +
                                            std::to_string(labels.size()));
  }
  std::set<std::string_view> seen;
  for (const std::string& l : labels) {
    if (!seen.insert(l).second) {
      throw Error(ErrorCode::DuplicateLabels, "label '" + l + "' repeated");
    }
  }
}

ProbeResult rank_classes(std::span<const std::string> labels,
                         std::span<const TokenId> tokens,
                         std::span<const double> logits,
                         std::span<const double> raw_logits,
                         ProbeOptions options) {
  const kernels::SoftmaxOutput sm = kernels::restricted_softmax(logits, options.guard);
  ProbeResult out;
  out.degenerate = sm.degenerate;
  out.results.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.results.push_back({labels[i], tokens[i], sm.probabilities[i], raw_logits[i]});
  }
  std::sort(out.results.begin(), out.results.end(),
            [](const ClassResult& a, const ClassResult& b) {
              if (a.probability != b.probability) return a.probability > b.probability;
              return a.token < b.token;
            });
  out.winner = out.results.front().label;
  out.confidence = out.results.front().probability;
  return out;
}

std::optional<ProbeResult> probe_classify(Session& session, std::string_view prompt,
                                          std::span<const std::string> labels,
                                          ProbeOptions options) {
  validate_labels(labels);
  std::vector<TokenId> tokens;
  tokens.reserve(labels.size());
  for (const std::string& label : labels) {
    auto id = session.vocab().text_to_id(label);
    if (!id) return std::nullopt;
    tokens.push_back(*id);
  }
  const LogitVector logits = run_prompt(session, prompt);
  std::vector<double> targets;
  targets.reserve(tokens.size());
  for (TokenId t : tokens) targets.push_back(logits[t]);
  return rank_classes(labels, tokens, targets, targets, options);
}

std::optional<ProbeResult> probe_yes_no(Session& session, std::string_view prompt,
                                        ProbeOptions options) {
  static const std::vector<std::string> kLabels{"Yes", "No"};
  return probe_classify(session, prompt, kLabels, options);
}

EntropyReading logit_entropy(std::span<const double> logits) {
  return {kernels::entropy(logits),
          logits.empty() ? 0.0 : std::log(static_cast<double>(logits.size()))};
}

}  // namespace logitgov
