#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "logitgov/backend.hpp"
#include "logitgov/kernels.hpp"

namespace logitgov {

struct ClassResult {
  std::string label;
  TokenId token = 0;
  double probability = 0.0;
  double raw_logit = 0.0;
};

struct ProbeResult {
  // Sorted by probability descending, ties by token id ascending.
  std::vector<ClassResult> results;
  std::string winner;
  double confidence = 0.0;
  bool degenerate = false;

  const ClassResult* find(std::string_view label) const;
};

struct ProbeOptions {
  kernels::GuardMode guard = kernels::GuardMode::Shifted;
};

struct EntropyReading {
  double nats = 0.0;
  double max_nats = 0.0;
};

// Builds a ProbeResult from already-read target logits. `logits[i]` feeds the
// softmax; `raw_logits[i]` is what gets reported.
ProbeResult rank_classes(std::span<const std::string> labels,
                         std::span<const TokenId> tokens,
                         std::span<const double> logits,
                         std::span<const double> raw_logits,
                         ProbeOptions options = {});

// Throws EmptyLabels (N < 2) or DuplicateLabels.
void validate_labels(std::span<const std::string> labels);

// N-way verbalizer classification from one pass over the prompt. Returns
// nullopt, without touching the session, if any label is not a single token.
std::optional<ProbeResult> probe_classify(Session& session, std::string_view prompt,
                                          std::span<const std::string> labels,
                                          ProbeOptions options = {});

std::optional<ProbeResult> probe_yes_no(Session& session, std::string_view prompt,
                                        ProbeOptions options = {});

EntropyReading logit_entropy(std::span<const double> logits);

}  // namespace logitgov
